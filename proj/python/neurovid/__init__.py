from ._core import (
    ConfigError,
    Container,
    Pipeline,
    PrereqError,
    RunConfig,
    ablation_stats,
    nway_topk,
    p_band,
    ssim,
)

__all__ = [
    "ConfigError",
    "Container",
    "Pipeline",
    "PrereqError",
    "RunConfig",
    "ablation_stats",
    "nway_topk",
    "p_band",
    "ssim",
]
