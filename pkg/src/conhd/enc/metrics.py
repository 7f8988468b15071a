import numpy as np


def f1_scores(pred, labels, num_classes: int) -> dict:
    """Micro-F1 (= accuracy here), Macro-F1 and per-class F1.

    A class with no support and no predictions scores F1 = 0.
    """
    pred = np.asarray(pred, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if pred.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if labels.size == 0:
        raise ValueError("cannot score an empty split")
    per_class = []
    for c in range(num_classes):
        tp = np.sum((pred == c) & (labels == c))
        fp = np.sum((pred == c) & (labels != c))
        fn = np.sum((pred != c) & (labels == c))
        denom = 2 * tp + fp + fn
        per_class.append(float(2 * tp / denom) if denom else 0.0)
    return {
        "micro_f1": float(np.mean(pred == labels)),
        "macro_f1": float(np.mean(per_class)),
        "per_class_f1": per_class,
    }


def mean_absolute_error(pred, target) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(target))))
