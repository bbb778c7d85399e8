from __future__ import annotations

import numpy as np


def face_predictions(P, faces) -> np.ndarray:
    """Face label = argmax of the summed probability rows of its three vertices.

    ``np.argmax`` returns the first maximum, so ties go to the smallest label.
    """
    P = np.asarray(P, dtype=np.float64)
    faces = np.asarray(faces)
    return (P[faces[:, 0]] + P[faces[:, 1]] + P[faces[:, 2]]).argmax(axis=1)


def face_accuracy(P, face_labels, faces) -> float:
    face_labels = np.asarray(face_labels)
    if len(face_labels) == 0:
        return 1.0
    return float(np.mean(face_predictions(P, faces) == face_labels))


def classification_accuracy(logits, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 1.0
    return float(np.mean(np.asarray(logits).argmax(axis=-1) == labels))
