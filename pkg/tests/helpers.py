"""Shared fixtures: the full differentiable pipeline as a pure function.

Builds the training objective (photometric render loss plus rigidity loss)
from a flat parameter dictionary, together with its hand-derived gradients,
so finite-difference checks can compare the two over every parameter kind
in one place.
"""

from dataclasses import replace

import numpy as np

from dynsplat.arap.loss import arap_loss
from dynsplat.core import quaternion as quat
from dynsplat.core.gaussians import GaussianSet
from dynsplat.deform.control import ControlPointSet
from dynsplat.deform.skinning import warp_scene, warp_scene_backward
from dynsplat.raster import render, render_backward
from dynsplat.raster.losses import render_loss, render_loss_grad

BG = (1.0, 1.0, 1.0)


def pipeline_params(gs: GaussianSet, ctrl: ControlPointSet, field) -> dict:
    return {
        "mu": gs.mu.copy(),
        "q_raw": gs.q.copy(),
        "s": gs.s.copy(),
        "sigma": gs.sigma.copy(),
        "sh": gs.sh.copy(),
        "ctrl_p": ctrl.p.copy(),
        "ctrl_o": ctrl.o.copy(),
        "field": field.params.copy(),
    }


def _rebuild(params, field):
    gs = GaussianSet(
        mu=params["mu"],
        q=quat.normalize(params["q_raw"]),
        s=params["s"],
        sigma=params["sigma"],
        sh=params["sh"],
    )
    ctrl = ControlPointSet(p=params["ctrl_p"], o=params["ctrl_o"])
    return gs, ctrl, replace(field, params=params["field"])


def pipeline_loss(
    params: dict,
    field,
    frame,
    nbr,
    graph,
    t_pair: float,
    lambda_dssim: float = 0.2,
    lambda_arap: float = 1.0,
) -> float:
    """Objective with the neighbor assignment and graph held fixed."""
    gs, ctrl, fld = _rebuild(params, field)
    warped, _ = warp_scene(gs, ctrl, fld, frame.t, nbr, want_cache=True)
    img = render(warped, frame.camera, background=BG)
    loss = render_loss(img.pixels, frame.image, lambda_dssim)
    if lambda_arap > 0:
        loss += lambda_arap * arap_loss(ctrl, fld, graph, frame.t, t_pair)
    return loss


def pipeline_grads(
    params: dict,
    field,
    frame,
    nbr,
    graph,
    t_pair: float,
    lambda_dssim: float = 0.2,
    lambda_arap: float = 1.0,
) -> dict:
    """Analytic gradients matching `pipeline_loss`, keyed like `params`."""
    gs, ctrl, fld = _rebuild(params, field)
    warped, cache = warp_scene(gs, ctrl, fld, frame.t, nbr, want_cache=True)
    img = render(warped, frame.camera, background=BG)
    upstream = render_loss_grad(img.pixels, frame.image, lambda_dssim)
    rg = render_backward(warped, frame.camera, upstream, background=BG, forward=img)
    wg = warp_scene_backward(fld, cache, rg["mu"], rg["q"])
    out = {
        "mu": wg["mu"],
        "q_raw": quat.normalize_backward(params["q_raw"], wg["q"]),
        "s": rg["s"],
        "sigma": rg["sigma"],
        "sh": rg["sh"],
        "ctrl_p": wg["p"],
        "ctrl_o": wg["o"],
        "field": wg["field"],
    }
    if lambda_arap > 0:
        _, ag = arap_loss(ctrl, fld, graph, frame.t, t_pair, want_grads=True)
        out["ctrl_p"] = out["ctrl_p"] + lambda_arap * ag["p"]
        out["field"] = out["field"] + lambda_arap * ag["field"]
    return out
