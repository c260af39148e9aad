"""Local-rigidity training loss over the control graph.

Between two sampled times the loss measures how far each neighborhood's
motion is from a best-fit rigid transform: edge vectors at t1 are compared
against the per-vertex fitted rotation applied to edge vectors at t2.
Positions enter translation-only (p + T^t). Gradients flow to the
translations and canonical positions; the fitted rotations are treated as
constants (their envelope term vanishes at the Procrustes optimum).
"""

import numpy as np

from ..deform.control import ControlPointSet
from ..deform.field import DeformationField
from ..errors import InvalidInputError
from .graph import ControlGraph
from .rotation import rotations_from_cross_cov


def _edge_vectors(x: np.ndarray, graph: ControlGraph):
    src = np.repeat(np.arange(len(graph)), np.diff(graph.indptr))
    return x[src] - x[graph.indices], src


def _per_vertex_rotations(x1, x2, graph: ControlGraph):
    """Fitted rotation per vertex from its weighted edge sets."""
    m = len(graph)
    e1, src = _edge_vectors(x1, graph)
    e2, _ = _edge_vectors(x2, graph)
    w = graph.weights
    # group edges by source vertex: H_i = sum_k w_ik a_k b_k^T
    h = np.zeros((m, 3, 3))
    np.add.at(h, src, w[:, None, None] * e2[:, :, None] * e1[:, None, :])
    r, _ = rotations_from_cross_cov(h)
    return r, (e1, e2, src)


def arap_loss(
    control: ControlPointSet,
    field: DeformationField,
    graph: ControlGraph,
    t1: float,
    t2: float,
    want_grads: bool = False,
):
    """Rigidity deviation between two times; optionally its gradients.

    Returns the scalar loss, or (loss, grads) when want_grads is set,
    where grads = {"p": (M, 3), "field": flat params}. Gradients do not
    pass through the fitted rotations.
    """
    for t in (t1, t2):
        if not 0.0 <= t <= 1.0:
            raise InvalidInputError("sample times must lie in [0, 1]")
    _, trans1, cache1 = field.query(control.p, float(t1))
    _, trans2, cache2 = field.query(control.p, float(t2))
    x1 = control.p + trans1
    x2 = control.p + trans2
    rot, (e1, e2, src) = _per_vertex_rotations(x1, x2, graph)

    re2 = np.einsum("eab,eb->ea", rot[src], e2)
    resid = e1 - re2
    loss = float(np.sum(graph.weights * np.sum(resid**2, axis=-1)))
    if not want_grads:
        return loss

    m = len(graph)
    g_e1 = 2.0 * graph.weights[:, None] * resid
    g_e2 = -np.einsum("eba,eb->ea", rot[src], g_e1)
    g_x1 = np.zeros((m, 3))
    g_x2 = np.zeros((m, 3))
    np.add.at(g_x1, src, g_e1)
    np.add.at(g_x1, graph.indices, -g_e1)
    np.add.at(g_x2, src, g_e2)
    np.add.at(g_x2, graph.indices, -g_e2)

    zeros_r = np.zeros((m, 4))
    d_params1, d_p1 = field.query_backward(cache1, zeros_r, g_x1)
    d_params2, d_p2 = field.query_backward(cache2, zeros_r, g_x2)
    grads = {
        "p": g_x1 + g_x2 + d_p1 + d_p2,
        "field": d_params1 + d_params2,
    }
    return loss, grads
