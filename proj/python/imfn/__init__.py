"""Tree-structured sequence memory with a distilled constant-cost student."""

from ._imfn import (
    CheckpointError,
    ConfigError,
    ParseError,
    ShapeError,
    Student,
    Teacher,
    generate_trajectory,
    load_idx,
    make_split,
    mse,
    naive_trajectory,
    profile,
    psnr,
    resolve_config,
    run_cli,
    ssim,
    synthetic_manifold,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ParseError",
    "ShapeError",
    "Student",
    "Teacher",
    "generate_trajectory",
    "load_idx",
    "make_split",
    "mse",
    "naive_trajectory",
    "profile",
    "psnr",
    "resolve_config",
    "run_cli",
    "ssim",
    "synthetic_manifold",
]
