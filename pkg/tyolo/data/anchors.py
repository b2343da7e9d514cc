"""
Anchor estimation by k-means over training box sizes.
"""

import numpy as np
import structlog
from sklearn.cluster import KMeans

from tyolo.models.config import DEFAULT_ANCHORS_640

logger = structlog.get_logger(__name__)

NUM_ANCHORS = 9


def default_anchors(input_size: int) -> np.ndarray:
    return np.asarray(DEFAULT_ANCHORS_640, dtype=np.float64) * (input_size / 640.0)


def kmeans_anchors(box_sizes: np.ndarray, input_size: int, seed: int = 0) -> np.ndarray:
    """
    Nine (w, h) pixel anchors from k-means over box sizes, sorted by area and split
    three per scale (smallest to stride 8). Falls back to the conventional defaults
    scaled to input_size when fewer than nine boxes are available.
    """
    wh = np.asarray(box_sizes, dtype=np.float64).reshape(-1, 2)
    wh = wh[(wh > 0).all(axis=1)]
    if len(np.unique(wh, axis=0)) < NUM_ANCHORS:
        logger.warning("too few distinct boxes for k-means anchors, using defaults", boxes=len(wh))
        return default_anchors(input_size)
    km = KMeans(n_clusters=NUM_ANCHORS, n_init=10, random_state=seed).fit(wh)
    centers = km.cluster_centers_
    centers = centers[np.argsort(centers.prod(axis=1), kind="stable")]
    anchors = np.maximum(centers, 1.0).reshape(3, 3, 2)
    logger.info("anchors estimated", boxes=len(wh), anchors=anchors.round(1).tolist())
    return anchors
