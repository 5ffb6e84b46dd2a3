"""Event-camera data synthesis toolkit.

Submodules: events (streams and file formats), encode (frame histograms),
simulate (frame-difference event simulation), diffusion (DDPM core),
denoiser (conditional noise predictor), conditioning (text / skeleton /
normal-map control signals), metrics (evaluation), cli (pipeline commands).
"""

__version__ = "0.1.0"

from . import (conditioning, config, denoiser, diffusion, encode, events,
               manifest, metrics, ppm, simulate)

__all__ = ["conditioning", "config", "denoiser", "diffusion", "encode",
           "events", "manifest", "metrics", "ppm", "simulate"]
