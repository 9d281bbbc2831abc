import numpy as np

from .errors import DataError, ShapeError


def accuracy(predictions, labels) -> float:
    """Fraction of predictions equal to their labels."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ShapeError(f"{pred.shape} predictions vs {lab.shape} labels")
    if pred.size == 0:
        raise DataError("accuracy of an empty set is undefined")
    return float(np.count_nonzero(pred == lab) / pred.size)
