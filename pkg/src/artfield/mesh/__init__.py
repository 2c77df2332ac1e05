"""Triangle meshes, posed pairs, OBJ I/O and template preprocessing."""

from ._core import (
    EPS_AREA,
    CorrespondenceMap,
    MeshError,
    PosedPair,
    TriMesh,
    degenerate_faces,
    expand,
    face_areas,
    face_normals,
    report_to_json,
    vertex_normals,
)
from .cleanup import boundary_loops, close_holes, connected_components, remove_components
from .decimate import DecimationError, decimate_pair
from .io import ObjParseError, load_obj, save_obj

__all__ = [
    "EPS_AREA", "CorrespondenceMap", "MeshError", "PosedPair", "TriMesh",
    "degenerate_faces", "expand", "face_areas", "face_normals", "report_to_json",
    "vertex_normals", "boundary_loops", "close_holes", "connected_components",
    "remove_components", "DecimationError", "decimate_pair", "ObjParseError",
    "load_obj", "save_obj",
]
