"""Scene configuration, grid evaluation, convergence studies and file
outputs for the boundary-walk solvers."""

from .scene import Scene, SceneError, load_scene
from .run import FieldGrid, run_field, convergence_study, compare_wos
from . import io

__all__ = [
    "Scene", "SceneError", "load_scene",
    "FieldGrid", "run_field", "convergence_study", "compare_wos",
    "io",
]
