"""Area minimisation of a disc mesh with fixed boundary.

Interior vertices move only along their normals.  Each step solves the
preconditioned system (K + 2 M) phi = -g, where g is the normal component
of the area gradient, K the cotangent stiffness and M the lumped mass.  The
operator K + 2 M is the Jacobi operator of a totally geodesic disc, so the
step is a Newton step near flat configurations.  An Armijo backtracking
line search keeps the area monotone.
"""

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RemeshRequiredError
from .hyperbolic import mink_inner, mink_norm2, normal_flow, normalize_point
from .mesh import (
    SolveInfo,
    SolverConfig,
    area_gradient,
    delaunay_flip,
    edge_lengths,
    face_angles,
    face_areas,
    mesh_laplacian,
    vertex_normals,
)

log = logging.getLogger(__name__)


def mean_curvature_residual(mesh):
    """max over interior vertices of |<grad Area, N>| / A_i, a discrete mean curvature."""
    x, f = mesh.vertices, mesh.faces
    g = mink_inner(area_gradient(x, f), vertex_normals(x, f))
    _, a = mesh_laplacian(x, f)
    inner = mesh.interior
    return float(np.max(np.abs(g[inner]) / a[inner]))


def _step_displacement(x0, x1):
    return float(np.max(2.0 * np.arcsinh(np.sqrt(np.maximum(mink_norm2(x0 - x1), 0.0)) / 2.0)))


def minimize_area(mesh, config=None):
    """Return the area-minimising mesh.  ``mesh.info`` records convergence."""
    config = config or SolverConfig()
    x = mesh.vertices.copy()
    faces = mesh.faces.copy()
    n = len(x)
    inner = mesh.interior
    ii = np.flatnonzero(inner)
    history = [float(np.sum(face_areas(x, faces)))]
    flips = 0
    residual = np.inf
    disp = 0.0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        if config.flip_every and it % config.flip_every == 0:
            faces, nf = delaunay_flip(mesh.with_vertices(x, faces=faces))
            flips += nf
        lengths = edge_lengths(x, faces)
        min_ang = np.degrees(face_angles(lengths).min())
        if min_ang < config.min_angle_deg:
            raise RemeshRequiredError(f"minimum angle {min_ang:.3g} deg below {config.min_angle_deg} deg")
        normals = vertex_normals(x, faces)
        grad = area_gradient(x, faces)
        g = mink_inner(grad, normals)
        K, mass = mesh_laplacian(x, faces)
        residual = float(np.max(np.abs(g[ii]) / mass[ii]))
        if residual < config.tol:
            converged = True
            it -= 1
            break
        P = (K + 2.0 * sp.diags(mass))[ii][:, ii].tocsc()
        phi = np.zeros(n)
        phi[ii] = spla.spsolve(P, -g[ii])
        slope = float(np.dot(g[ii], phi[ii]))
        if slope >= 0:
            phi[ii] = -g[ii] / mass[ii]
            slope = float(np.dot(g[ii], phi[ii]))
        area0 = history[-1]
        step = 1.0
        for _ in range(config.max_backtracks):
            trial = x.copy()
            trial[ii] = normalize_point(normal_flow(x[ii], normals[ii], step * phi[ii]))
            area1 = float(np.sum(face_areas(trial, faces)))
            if area1 <= area0 + config.armijo * step * slope:
                break
            step *= config.shrink
        else:
            log.warning("line search stalled at iteration %d (residual %.3g)", it, residual)
            break
        disp = _step_displacement(x, trial)
        x = trial
        history.append(area1)
        log.debug("iter %d area %.12g residual %.3g step %.3g", it, area1, residual, step)
    else:
        g = mink_inner(area_gradient(x, faces), vertex_normals(x, faces))
        _, mass = mesh_laplacian(x, faces)
        residual = float(np.max(np.abs(g[ii]) / mass[ii]))
        converged = residual < config.tol
        it = config.max_iter
    info = SolveInfo(converged, it, residual, disp, history, flips)
    return mesh.with_vertices(x, faces=faces, info=info)
