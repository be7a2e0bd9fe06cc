"""Group-wise accuracy accounting: per-group, worst-group, and averages.

Two different "average" figures are always emitted side by side, because
published tables rarely say which one they mean: avg_sample is the overall
fraction of correct predictions (sample-weighted) and avg_group is the
unweighted mean of the per-group accuracies.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DataError


@dataclass(frozen=True)
class GroupStat:
    correct: int
    total: int
    accuracy: float


@dataclass(frozen=True)
class GroupReport:
    """Accuracy accounting over the group structure of one evaluation."""

    per_group: dict  # group id -> GroupStat, present groups only
    wga: float  # min per-group accuracy
    avg_sample: float  # sum(correct) / sum(total)
    avg_group: float  # unweighted mean of per-group accuracies
    n_groups: int
    absent_groups: tuple  # ids in the universe with no samples

    @property
    def best_group(self):
        return max(s.accuracy for s in self.per_group.values())

    def to_dict(self):
        return {
            "per_group": {
                str(g): {"correct": s.correct, "total": s.total,
                         "accuracy": s.accuracy}
                for g, s in sorted(self.per_group.items())
            },
            "wga": self.wga,
            "avg_sample": self.avg_sample,
            "avg_group": self.avg_group,
            "n_groups": self.n_groups,
            "absent_groups": list(self.absent_groups),
        }

    @classmethod
    def from_dict(cls, d):
        per_group = {
            int(g): GroupStat(int(s["correct"]), int(s["total"]),
                              float(s["accuracy"]))
            for g, s in d["per_group"].items()
        }
        return cls(per_group=per_group, wga=float(d["wga"]),
                   avg_sample=float(d["avg_sample"]),
                   avg_group=float(d["avg_group"]),
                   n_groups=int(d["n_groups"]),
                   absent_groups=tuple(d.get("absent_groups", ())))


def group_report(predictions, dataset):
    """Exact per-group accuracy counts for predictions on a labeled set.

    Groups in the set's universe with no samples are excluded from the
    minimum and listed in absent_groups.
    """
    preds = np.asarray(predictions, dtype=np.int64)
    if preds.shape != dataset.labels.shape:
        raise ConsistencyError(
            f"{preds.shape[0] if preds.ndim else 0} predictions for "
            f"{dataset.n} samples"
        )
    correct = preds == dataset.labels
    per_group = {}
    for g in np.unique(dataset.groups):
        mask = dataset.groups == g
        tot = int(mask.sum())
        hit = int(correct[mask].sum())
        per_group[int(g)] = GroupStat(hit, tot, hit / tot)
    accs = [s.accuracy for s in per_group.values()]
    absent = tuple(g for g in range(dataset.num_groups) if g not in per_group)
    return GroupReport(
        per_group=per_group,
        wga=min(accs),
        avg_sample=float(correct.sum() / preds.size),
        avg_group=float(np.mean(accs)),
        n_groups=len(per_group),
        absent_groups=absent,
    )


def compare_reports(before, after):
    """Per-group and aggregate accuracy deltas (after minus before).

    Both reports must cover the same present groups.
    """
    if set(before.per_group) != set(after.per_group):
        raise ConsistencyError(
            "reports cover different groups: "
            f"{sorted(before.per_group)} vs {sorted(after.per_group)}"
        )
    rows = []
    for g in sorted(before.per_group):
        b, a = before.per_group[g], after.per_group[g]
        rows.append({
            "group": g,
            "before": b.accuracy,
            "after": a.accuracy,
            "delta": a.accuracy - b.accuracy,
        })
    return {
        "groups": rows,
        "wga_before": before.wga,
        "wga_after": after.wga,
        "wga_delta": after.wga - before.wga,
        "avg_sample_delta": after.avg_sample - before.avg_sample,
        "avg_group_delta": after.avg_group - before.avg_group,
    }


def sweep_report(named_reports):
    """Summary rows (task, best, worst, avg_group), sorted by ascending avg_group."""
    if not named_reports:
        raise DataError("sweep_report needs at least one (name, report) pair")
    rows = [
        {
            "task": str(name),
            "best_group": rep.best_group,
            "worst_group": rep.wga,
            "avg_group": rep.avg_group,
        }
        for name, rep in named_reports
    ]
    rows.sort(key=lambda r: (r["avg_group"], r["task"]))
    return rows


def report_csv_rows(report):
    """Flat rows (one per group) for CSV emission."""
    rows = [
        {"group": g, "correct": s.correct, "total": s.total,
         "accuracy": s.accuracy}
        for g, s in sorted(report.per_group.items())
    ]
    return rows
