"""Physically calibrated synthetic rain and object-detection degradation sweeps."""
from ._accel import backend_name
from .imaging import Image, Kernel, convolve_separable, gaussian_kernel, load_image, save_image, to_luma
from .quality import QualityScore, SsimParams, mse, psnr, ssim
from .rainsim import (DropletStyle, RainMapping, RaindropField, composite, droplets_to_rainfall,
                      generate_field, rainfall_to_droplets)

__version__ = "0.1.0"

__all__ = [
    "Image", "Kernel", "load_image", "save_image", "to_luma", "gaussian_kernel",
    "convolve_separable", "SsimParams", "QualityScore", "mse", "psnr", "ssim",
    "RainMapping", "DropletStyle", "RaindropField", "rainfall_to_droplets",
    "droplets_to_rainfall", "generate_field", "composite", "backend_name",
]
