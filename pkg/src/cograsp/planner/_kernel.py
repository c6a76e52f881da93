"""Fused penalized-objective kernel for the inner solver.

Computes the same quantity as the numpy path in ``trajectory`` (objective
plus ``mu`` times the margin-tightened quadratic penalty) together with its
gradient with respect to all control points, in one pass over the quadrature
nodes.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def penalized_value_grad(C, B0, B1, B2, w, h, grasp, base, rcoll, r_min, r_max,
                         margin, w_f, eps, mu):
    M = C.shape[0]
    n = B0.shape[0]
    gC = np.zeros_like(C)
    q = np.empty(7)
    qd = np.empty(7)
    qdd = np.empty(7)
    gq = np.empty(7)
    gqd = np.empty(7)
    gqdd = np.empty(7)
    total = 0.0
    for m in range(M):
        for k in range(n):
            for d in range(7):
                a = 0.0
                b = 0.0
                c = 0.0
                for j in range(4):
                    a += B0[k, j] * C[m, j, d]
                    b += B1[k, j] * C[m, j, d]
                    c += B2[k, j] * C[m, j, d]
                q[d] = a
                qd[d] = b / h
                qdd[d] = c / (h * h)
                gq[d] = 0.0
            wt = w[k] * h
            sq = 0.0
            sa = 0.0
            for d in range(7):
                sq += qd[d] * qd[d]
                sa += qdd[d] * qdd[d]
            sp = math.sqrt(sq + eps * eps)
            total += wt * (sp - eps + sq + sa)
            for d in range(7):
                gqd[d] = wt * (qd[d] / sp + 2.0 * qd[d])
                gqdd[d] = 2.0 * wt * qdd[d]
            th = q[6]
            thd = qd[6]
            cs = math.cos(th)
            sn = math.sin(th)
            for i in range(2):
                rx = 2 * i
                # formation velocity term
                ax = base[i, 0]
                ay = base[i, 1]
                rax = cs * ax - sn * ay
                ray = sn * ax + cs * ay
                rpx = -ray
                rpy = rax
                ex = qd[rx] - (qd[4] + thd * rpx)
                ey = qd[rx + 1] - (qd[5] + thd * rpy)
                total += w_f * wt * (ex * ex + ey * ey)
                gex = 2.0 * w_f * wt * ex
                gey = 2.0 * w_f * wt * ey
                gqd[rx] += gex
                gqd[rx + 1] += gey
                gqd[4] -= gex
                gqd[5] -= gey
                gqd[6] -= gex * rpx + gey * rpy
                gq[6] += thd * (gex * rax + gey * ray)
                # reach annulus around the carried grasp point
                gx = grasp[i, 0]
                gy = grasp[i, 1]
                gax = cs * gx - sn * gy
                gay = sn * gx + cs * gy
                dx = q[rx] - (q[4] + gax)
                dy = q[rx + 1] - (q[5] + gay)
                dist = math.sqrt(dx * dx + dy * dy)
                vmin = r_min + margin - dist
                vmax = dist - (r_max - margin)
                gdist = 0.0
                if vmin > 0.0:
                    total += mu * wt * vmin * vmin
                    gdist -= 2.0 * mu * wt * vmin
                if vmax > 0.0:
                    total += mu * wt * vmax * vmax
                    gdist += 2.0 * mu * wt * vmax
                if gdist != 0.0 and dist > 1e-12:
                    ux = gdist * dx / dist
                    uy = gdist * dy / dist
                    gq[rx] += ux
                    gq[rx + 1] += uy
                    gq[4] -= ux
                    gq[5] -= uy
                    gq[6] -= ux * (-gay) + uy * gax
                # formation radius around the nominal base position
                fx = q[rx] - (q[4] + rax)
                fy = q[rx + 1] - (q[5] + ray)
                fn = math.sqrt(fx * fx + fy * fy)
                vf = fn - (rcoll[i] - margin)
                if vf > 0.0:
                    total += mu * wt * vf * vf
                    if fn > 1e-12:
                        g = 2.0 * mu * wt * vf / fn
                        ux = g * fx
                        uy = g * fy
                        gq[rx] += ux
                        gq[rx + 1] += uy
                        gq[4] -= ux
                        gq[5] -= uy
                        gq[6] -= ux * rpx + uy * rpy
            for j in range(4):
                b0 = B0[k, j]
                b1 = B1[k, j] / h
                b2 = B2[k, j] / (h * h)
                for d in range(7):
                    gC[m, j, d] += b0 * gq[d] + b1 * gqd[d] + b2 * gqdd[d]
    return total, gC
