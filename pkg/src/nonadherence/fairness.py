"""Group fairness gaps over hard predictions: demographic parity and equalized odds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike


class EmptyGroupError(ValueError):
    pass


class EmptyStratumWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GroupOutcomes:
    group: np.ndarray  # 1 = focal group
    y_true: np.ndarray
    y_pred: np.ndarray

    @classmethod
    def from_arrays(cls, group: ArrayLike, y_true: ArrayLike, y_pred: ArrayLike) -> "GroupOutcomes":
        g, yt, yp = (np.asarray(a).astype(int) for a in (group, y_true, y_pred))
        if not (g.shape == yt.shape == yp.shape) or g.ndim != 1:
            raise ValueError("group, y_true and y_pred must be 1-d and equally long")
        for name, a in (("group", g), ("y_true", yt), ("y_pred", yp)):
            if a.size and not np.all((a == 0) | (a == 1)):
                raise ValueError(f"{name} must be binary")
        if g.sum() == 0 or g.sum() == g.size:
            raise EmptyGroupError("both groups must be nonempty")
        return cls(g, yt, yp)


def _rate(pred: np.ndarray, mask: np.ndarray) -> float | None:
    n = int(mask.sum())
    return None if n == 0 else float(pred[mask].sum()) / n


def demographic_parity_diff(o: GroupOutcomes) -> float:
    focal = o.group == 1
    return abs(_rate(o.y_pred, focal) - _rate(o.y_pred, ~focal))


def equalized_odds_diffs(o: GroupOutcomes) -> tuple[float | None, float | None]:
    """(|TPR gap|, |FPR gap|); a gap is None when one of its strata is empty."""
    out = []
    for label, name in ((1, "true positive"), (0, "false positive")):
        stratum = o.y_true == label
        r1 = _rate(o.y_pred, stratum & (o.group == 1))
        r0 = _rate(o.y_pred, stratum & (o.group == 0))
        if r1 is None or r0 is None:
            warnings.warn(f"{name} rate undefined: empty stratum", EmptyStratumWarning, stacklevel=2)
            out.append(None)
        else:
            out.append(abs(r1 - r0))
    return out[0], out[1]


def one_vs_rest(groups: ArrayLike, focal: str) -> np.ndarray:
    return (np.asarray(groups) == focal).astype(int)


def fairness_summary(groups: ArrayLike, y_true: ArrayLike, y_pred: ArrayLike,
                     focal_groups: tuple[str, ...]) -> dict[str, dict[str, float | None]]:
    """Per focal group (one-vs-rest): dp, tpr and fpr gaps."""
    out = {}
    for focal in focal_groups:
        indicator = one_vs_rest(groups, focal)
        try:
            o = GroupOutcomes.from_arrays(indicator, y_true, y_pred)
        except EmptyGroupError:
            out[focal] = {"dp": None, "tpr": None, "fpr": None}
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyStratumWarning)
            tpr, fpr = equalized_odds_diffs(o)
        out[focal] = {"dp": demographic_parity_diff(o), "tpr": tpr, "fpr": fpr}
    return out
