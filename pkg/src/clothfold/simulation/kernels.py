"""Numba kernels for the position-based-dynamics solver and rasterizer."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def integrate(pos, vel, inv_mass, prev, gravity, damp_factor, dt):
    n = pos.shape[0]
    for i in range(n):
        prev[i, 0] = pos[i, 0]
        prev[i, 1] = pos[i, 1]
        prev[i, 2] = pos[i, 2]
        if inv_mass[i] <= 0.0:
            continue
        vel[i, 2] -= gravity * dt
        vel[i, 0] *= damp_factor
        vel[i, 1] *= damp_factor
        vel[i, 2] *= damp_factor
        pos[i, 0] += vel[i, 0] * dt
        pos[i, 1] += vel[i, 1] * dt
        pos[i, 2] += vel[i, 2] * dt


@njit(cache=True)
def project_distance(pos, inv_mass, ei, ej, rest, k):
    for c in range(ei.shape[0]):
        i = ei[c]
        j = ej[c]
        wi = inv_mass[i]
        wj = inv_mass[j]
        wsum = wi + wj
        if wsum <= 0.0:
            continue
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        dz = pos[i, 2] - pos[j, 2]
        d = (dx * dx + dy * dy + dz * dz) ** 0.5
        if d < 1e-12:
            continue
        corr = k * (d - rest[c]) / (d * wsum)
        pos[i, 0] -= wi * corr * dx
        pos[i, 1] -= wi * corr * dy
        pos[i, 2] -= wi * corr * dz
        pos[j, 0] += wj * corr * dx
        pos[j, 1] += wj * corr * dy
        pos[j, 2] += wj * corr * dz


@njit(cache=True)
def project_table(pos):
    for i in range(pos.shape[0]):
        if pos[i, 2] < 0.0:
            pos[i, 2] = 0.0


@njit(cache=True)
def apply_attachments(pos, vel, att_particles, att_offsets, att_gripper, gripper_pos, gripper_vel):
    for a in range(att_particles.shape[0]):
        p = att_particles[a]
        g = att_gripper[a]
        pos[p, 0] = gripper_pos[g, 0] + att_offsets[a, 0]
        pos[p, 1] = gripper_pos[g, 1] + att_offsets[a, 1]
        pos[p, 2] = gripper_pos[g, 2] + att_offsets[a, 2]
        vel[p, 0] = gripper_vel[g, 0]
        vel[p, 1] = gripper_vel[g, 1]
        vel[p, 2] = gripper_vel[g, 2]


@njit(cache=True)
def update_velocities(pos, prev, vel, inv_mass, dt, friction):
    n = pos.shape[0]
    for i in range(n):
        if inv_mass[i] <= 0.0:
            continue
        vel[i, 0] = (pos[i, 0] - prev[i, 0]) / dt
        vel[i, 1] = (pos[i, 1] - prev[i, 1]) / dt
        vel[i, 2] = (pos[i, 2] - prev[i, 2]) / dt
        if pos[i, 2] <= 1e-6:
            # Table contact: kill downward motion, damp tangential slide.
            if vel[i, 2] < 0.0:
                vel[i, 2] = 0.0
            vel[i, 0] *= 1.0 - friction
            vel[i, 1] *= 1.0 - friction


@njit(cache=True)
def solve_step(
    pos,
    vel,
    inv_mass,
    prev,
    stretch_i,
    stretch_j,
    stretch_rest,
    bend_i,
    bend_j,
    bend_rest,
    att_particles,
    att_offsets,
    att_gids,
    gripper_pos,
    gripper_vel,
    gravity,
    damp_factor,
    dt_sub,
    substeps,
    iterations,
    k_stretch,
    k_bend,
    friction,
):
    """One fixed timestep: all substeps and constraint iterations fused."""
    for _ in range(substeps):
        apply_attachments(
            pos, vel, att_particles, att_offsets, att_gids, gripper_pos, gripper_vel
        )
        integrate(pos, vel, inv_mass, prev, gravity, damp_factor, dt_sub)
        for _ in range(iterations):
            project_distance(pos, inv_mass, stretch_i, stretch_j, stretch_rest, k_stretch)
            project_distance(pos, inv_mass, bend_i, bend_j, bend_rest, k_bend)
            project_table(pos)
        update_velocities(pos, prev, vel, inv_mass, dt_sub, friction)


@njit(cache=True)
def max_speed(vel, inv_mass):
    best = 0.0
    for i in range(vel.shape[0]):
        if inv_mass[i] <= 0.0:
            continue
        s = (
            vel[i, 0] * vel[i, 0]
            + vel[i, 1] * vel[i, 1]
            + vel[i, 2] * vel[i, 2]
        )
        if s > best:
            best = s
    return best**0.5


@njit(cache=True)
def rasterize_triangles(verts_xy, tris, lo, pixel, res, out):
    """Top-down binary rasterization: pixel centers covered by any triangle.

    A pixel center is inside a triangle when all three barycentric
    coordinates are >= -1e-12 (inclusive edges).
    """
    for t in range(tris.shape[0]):
        ax = verts_xy[tris[t, 0], 0]
        ay = verts_xy[tris[t, 0], 1]
        bx = verts_xy[tris[t, 1], 0]
        by = verts_xy[tris[t, 1], 1]
        cx = verts_xy[tris[t, 2], 0]
        cy = verts_xy[tris[t, 2], 1]
        den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if den == 0.0:
            continue
        xmin = min(ax, min(bx, cx))
        xmax = max(ax, max(bx, cx))
        ymin = min(ay, min(by, cy))
        ymax = max(ay, max(by, cy))
        i0 = max(0, int(np.floor((xmin - lo) / pixel - 0.5)))
        i1 = min(res - 1, int(np.ceil((xmax - lo) / pixel - 0.5)))
        j0 = max(0, int(np.floor((ymin - lo) / pixel - 0.5)))
        j1 = min(res - 1, int(np.ceil((ymax - lo) / pixel - 0.5)))
        for i in range(i0, i1 + 1):
            px = lo + (i + 0.5) * pixel
            for j in range(j0, j1 + 1):
                py = lo + (j + 0.5) * pixel
                w0 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / den
                w1 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / den
                w2 = 1.0 - w0 - w1
                if w0 >= -1e-12 and w1 >= -1e-12 and w2 >= -1e-12:
                    out[j, i] = True


@njit(cache=True)
def zbuffer_triangles(verts, tris, lo, pixel, res, out):
    """Top-down height buffer: max surface z per covered pixel."""
    for t in range(tris.shape[0]):
        ia, ib, ic = tris[t, 0], tris[t, 1], tris[t, 2]
        ax, ay, az = verts[ia, 0], verts[ia, 1], verts[ia, 2]
        bx, by, bz = verts[ib, 0], verts[ib, 1], verts[ib, 2]
        cx, cy, cz = verts[ic, 0], verts[ic, 1], verts[ic, 2]
        den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if den == 0.0:
            continue
        xmin = min(ax, min(bx, cx))
        xmax = max(ax, max(bx, cx))
        ymin = min(ay, min(by, cy))
        ymax = max(ay, max(by, cy))
        i0 = max(0, int(np.floor((xmin - lo) / pixel - 0.5)))
        i1 = min(res - 1, int(np.ceil((xmax - lo) / pixel - 0.5)))
        j0 = max(0, int(np.floor((ymin - lo) / pixel - 0.5)))
        j1 = min(res - 1, int(np.ceil((ymax - lo) / pixel - 0.5)))
        for i in range(i0, i1 + 1):
            px = lo + (i + 0.5) * pixel
            for j in range(j0, j1 + 1):
                py = lo + (j + 0.5) * pixel
                w0 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / den
                w1 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / den
                w2 = 1.0 - w0 - w1
                if w0 >= -1e-12 and w1 >= -1e-12 and w2 >= -1e-12:
                    z = w0 * az + w1 * bz + w2 * cz
                    if z > out[j, i]:
                        out[j, i] = z
