"""Software Gaussian-splat renderer: projection, blending, gradients, losses."""

from .backward import render_backward
from .forward import RenderDiagnostics, RenderedImage, render, render_reference
from .image_io import read_pfm, read_png, write_pfm, write_png
from .losses import (
    loss_dssim,
    loss_dssim_grad,
    loss_l1,
    loss_l1_grad,
    metric_psnr,
    metric_ssim,
    metric_ssim_grad,
    render_loss,
    render_loss_grad,
)
from .project import ProjectedGaussian, Projection, project_gaussian, project_gaussians

__all__ = [
    "ProjectedGaussian",
    "Projection",
    "RenderDiagnostics",
    "RenderedImage",
    "project_gaussian",
    "project_gaussians",
    "render",
    "render_reference",
    "render_backward",
    "loss_l1",
    "loss_l1_grad",
    "loss_dssim",
    "loss_dssim_grad",
    "metric_psnr",
    "metric_ssim",
    "metric_ssim_grad",
    "render_loss",
    "render_loss_grad",
    "read_png",
    "write_png",
    "read_pfm",
    "write_pfm",
]
