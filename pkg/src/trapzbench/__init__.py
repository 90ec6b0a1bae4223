"""Perspective-distortion robustness benchmark for structured document extraction."""

from .geometry import (
    DistortionParams,
    DocumentExtent,
    Homography,
    Point2,
    Quad,
    apply_homography,
    distortion_ratio_of,
    homography_from_correspondences,
    homography_from_params,
    invert_homography,
    trapezoid_vertices,
)

__version__ = "0.1.0"
