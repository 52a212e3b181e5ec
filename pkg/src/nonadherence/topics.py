"""Class-based TF-IDF key terms for clustered non-adherence excerpts.

Clusters are assigned upstream (embedding + density clustering are not done
here); cluster id -1 marks noise and is ignored.
"""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

STOP_WORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because been
    before being below between both but by can could did do does doing down during each
    few for from further had has have having he her here hers herself him himself his how
    i if in into is it its itself just me more most my myself no nor not now of off on once
    only or other our ours ourselves out over own same she should so some such than that the
    their theirs them themselves then there these they this those through to too under until
    up very was we were what when where which while who whom why will with would you your
    yours yourself yourselves pt per
    """.split()
)

_SPLIT = re.compile(r"[^0-9a-z]+")

# reference reason buckets and shares, used for report rendering
REPORTED_REASON_SHARES = {
    "side effects": 59.8,
    "forgetfulness": 17.7,
    "refill or lost medication": 11.6,
    "not picked up": 11.0,
}


class EmptyClusterError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT.split(text.lower()) if len(t) >= 3 and t not in STOP_WORDS]


@dataclass(frozen=True)
class ClusteredCorpus:
    documents: tuple[str, ...]
    cluster_of: tuple[int, ...]

    def __post_init__(self):
        if len(self.documents) != len(self.cluster_of):
            raise ValueError("one cluster id per document")
        if not any(c != -1 for c in self.cluster_of):
            raise ValueError("corpus needs at least one non-noise cluster")

    @property
    def clusters(self) -> list[int]:
        return sorted({c for c in self.cluster_of if c != -1})

    def shares(self) -> dict[int, float]:
        """Percentage of non-noise documents per cluster."""
        counts = Counter(c for c in self.cluster_of if c != -1)
        total = sum(counts.values())
        return {c: 100.0 * counts[c] / total for c in sorted(counts)}


def ctfidf_scores(corpus: ClusteredCorpus) -> dict[int, dict[str, float]]:
    """W(t, c) = tf(t, c) * ln(1 + A / f(t)) over cluster-concatenated documents.

    tf(t, c) counts t in cluster c, f(t) counts t over all clusters, and A is the
    average number of terms per cluster.
    """
    tf: dict[int, Counter] = {c: Counter() for c in corpus.clusters}
    for doc, c in zip(corpus.documents, corpus.cluster_of):
        if c != -1:
            tf[c].update(tokenize(doc))
    empty = [c for c, counts in tf.items() if not counts]
    if empty:
        raise EmptyClusterError(f"clusters without any terms: {empty}")
    total = Counter()
    for counts in tf.values():
        total.update(counts)
    avg_terms = sum(total.values()) / len(tf)
    return {
        c: {t: n * math.log(1.0 + avg_terms / total[t]) for t, n in counts.items()}
        for c, counts in tf.items()
    }


def ctfidf_top_terms(corpus: ClusteredCorpus, k: int = 10) -> dict[int, list[tuple[str, float]]]:
    if k < 1:
        raise ValueError("k must be at least 1")
    scores = ctfidf_scores(corpus)
    return {
        c: sorted(s.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        for c, s in scores.items()
    }


def read_corpus(path: str | Path) -> ClusteredCorpus:
    """CSV with columns ``excerpt`` and ``cluster_id``."""
    docs, ids = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            docs.append(row["excerpt"])
            ids.append(int(row["cluster_id"]))
    return ClusteredCorpus(tuple(docs), tuple(ids))


def topic_table(corpus: ClusteredCorpus, k: int = 10) -> list[dict]:
    shares = corpus.shares()
    return [
        {"cluster_id": c, "share_percent": round(shares[c], 2),
         "terms": [t for t, _ in terms], "scores": [round(s, 6) for _, s in terms]}
        for c, terms in ctfidf_top_terms(corpus, k).items()
    ]

