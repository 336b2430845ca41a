"""Toy instruction-based image editing stack (C++ core with pybind11 bindings)."""

from ._smartedit import (
    ConfigError,
    Editor,
    InvariantError,
    NoiseSchedule,
    __version__,
    embed_score,
    ins_align_oracle,
    l1,
    make_sample,
    psnr,
    q_sample,
    render_scene,
    ssim,
    task_names,
    toy_decode,
    toy_encode,
    write_dataset,
)

__all__ = [
    "ConfigError",
    "Editor",
    "InvariantError",
    "NoiseSchedule",
    "__version__",
    "embed_score",
    "ins_align_oracle",
    "l1",
    "make_sample",
    "psnr",
    "q_sample",
    "render_scene",
    "ssim",
    "task_names",
    "toy_decode",
    "toy_encode",
    "write_dataset",
]
