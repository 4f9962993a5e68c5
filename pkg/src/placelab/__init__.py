"""placelab: desk-scale laboratory for learning multimodal object placement.

Procedurally generates objects with annotated placement slots, builds
ground-truth placement scenes, trains an SE(3) diffusion pose-refinement model
on local point-cloud crops, and scores predictions by success rate, mode
coverage, and precision.
"""

__version__ = "0.1.0"

from .geometry import (RigidTransform, UnitQuaternion, geodesic_distance,
                       interpolate_transform, sample_uniform_rotation, slerp,
                       swing_twist)
from .pointcloud import (Aabb, NormalizationRecord, PointCloud,
                         chamfer_distance, crop_sphere, farthest_point_sample,
                         normalize_unit_cube, sample_mesh_surface)

__all__ = [
    "RigidTransform", "UnitQuaternion", "geodesic_distance",
    "interpolate_transform", "sample_uniform_rotation", "slerp", "swing_twist",
    "Aabb", "NormalizationRecord", "PointCloud", "chamfer_distance",
    "crop_sphere", "farthest_point_sample", "normalize_unit_cube",
    "sample_mesh_surface",
]
