"""Flow-sensitive points-to analysis solved on a set-constraint graph."""

from .andersen import PointsToMap, analyze_fi, build_ficonsg, wave_solve
from .defuse import compute_indirect_defuse, compute_mod_ref
from .fsconsg import build_fsconsg, version_of
from .fssolver import FsResult, analyze_fs, fs_solve, query_pts, run_pipeline
from .ir import build_cfg, format_program, parse_program

__all__ = [
    "FsResult", "PointsToMap", "analyze_fi", "analyze_fs", "build_cfg", "build_ficonsg",
    "build_fsconsg", "compute_indirect_defuse", "compute_mod_ref", "format_program",
    "fs_solve", "parse_program", "query_pts", "run_pipeline", "version_of", "wave_solve",
]
