"""Independent brute-force oracles for the backward recursion.

The grid oracle never touches the engine's piecewise-linear machinery: value
functions live on a dense wealth grid, the exposure interval is scanned with
a 10^4-point grid (plus a local zoom around the best point so the scan error
is negligible against the stated 1e-3 comparison tolerance), and stopping is
the exhaustive min/max of the shortfall recursion evaluated on the grid.
"""

from __future__ import annotations

import numpy as np

from gamehedge.market import CrrModel
from gamehedge.payoff import DiscretePayoffs


class GridOracle:
    def __init__(
        self,
        model: CrrModel,
        payoffs: DiscretePayoffs,
        american: bool = False,
        n_y: int = 4001,
        n_u: int = 10_001,
        zoom: int = 65,
        chunk: int = 256,
        kink_cap: int = 4000,
    ):
        self.model = model
        self.payoffs = payoffs
        self.american = american
        self.n_u = n_u
        self.zoom = zoom
        self.chunk = chunk

        n = model.n
        fmax = max(float(payoffs.f[k].max()) for k in range(n + 1))
        self.ymax = 1.05 * max(fmax, 1e-6)
        grid = np.union1d(
            np.linspace(0.0, self.ymax, n_y), self._kink_lattice(kink_cap)
        )
        self.grid = grid
        self._solve()

    def _kink_lattice(self, cap: int) -> np.ndarray:
        """Candidate kink abscissae of the value functions at levels >= 1.

        Hinge corners sit at the per-node payoffs; the one-step minimization
        transports child kinks through y = lam*b_up + (1-lam)*b_dn.  Envelope
        crossings are not representable this way and stay grid-resolved.
        """
        m, pf = self.model, self.payoffs
        n = m.n
        lam = -m.a2 / (m.a1 - m.a2)
        kinks: dict[tuple[int, int], np.ndarray] = {}
        for idx in range(pf.node_count(n)):
            kinks[(n, idx)] = np.array([0.0, float(pf.f[n][idx])])
        for k in range(n - 1, 0, -1):
            for idx in range(pf.node_count(k)):
                up = kinks[(k + 1, pf.child_up(k, idx))]
                dn = kinks[(k + 1, pf.child_down(k, idx))]
                combo = (lam * up[:, None] + (1.0 - lam) * dn[None, :]).ravel()
                own = np.array([float(pf.f[k][idx]), float(pf.g[k][idx])])
                ks = np.union1d(combo, own)
                ks = ks[ks <= self.ymax]
                if len(ks) > cap:
                    ks = ks[:: len(ks) // cap + 1]
                kinks[(k, idx)] = ks
        out = np.unique(np.concatenate([v for v in kinks.values()]))
        return out[out <= self.ymax]

    def _solve(self) -> None:
        m = self.model
        pf = self.payoffs
        n = m.n
        p, a1, a2 = m.p_obj, m.a1, m.a2
        lam = -a2 / (a1 - a2)
        grid = self.grid

        w = np.linspace(-1.0 / a1, -1.0 / a2, self.n_u)
        c1 = 1.0 + w * a1
        c2 = 1.0 + w * a2
        c1[0] = 0.0
        c2[-1] = 0.0
        tz = np.linspace(0.0, 1.0, self.zoom)

        values: dict[tuple[int, int], np.ndarray] = {}
        support: dict[tuple[int, int], float] = {}
        for idx in range(pf.node_count(n)):
            f = float(pf.f[n][idx])
            values[(n, idx)] = np.maximum(f - grid, 0.0)
            support[(n, idx)] = f

        for k in range(n - 1, 0, -1):
            for idx in range(pf.node_count(k)):
                up = values[(n_k := k + 1, pf.child_up(k, idx))]
                dn = values[(n_k, pf.child_down(k, idx))]
                s_up = support[(n_k, pf.child_up(k, idx))]
                s_dn = support[(n_k, pf.child_down(k, idx))]
                f = float(pf.f[k][idx])
                g = float(pf.g[k][idx])
                s_psi = lam * s_up + (1.0 - lam) * s_dn
                s = max(f, s_psi)
                if not self.american:
                    s = min(g, s)

                J = np.zeros(len(grid))
                active = int(np.searchsorted(grid, s * (1 + 1e-12), side="right"))
                for lo in range(0, active, self.chunk):
                    hi = min(lo + self.chunk, active)
                    y = grid[lo:hi]
                    q1 = y[:, None] * c1[None, :]
                    q2 = y[:, None] * c2[None, :]
                    v = p * np.interp(q1.ravel(), grid, up).reshape(q1.shape)
                    v += (1 - p) * np.interp(q2.ravel(), grid, dn).reshape(q2.shape)
                    best = np.argmin(v, axis=1)
                    psi = v[np.arange(len(y)), best]
                    # zoom the scan around the best grid point
                    wl = w[np.maximum(best - 1, 0)]
                    wh = w[np.minimum(best + 1, self.n_u - 1)]
                    wz = wl[:, None] + (wh - wl)[:, None] * tz[None, :]
                    z1 = np.maximum(y[:, None] * (1.0 + wz * a1), 0.0)
                    z2 = np.maximum(y[:, None] * (1.0 + wz * a2), 0.0)
                    vz = p * np.interp(z1.ravel(), grid, up).reshape(z1.shape)
                    vz += (1 - p) * np.interp(z2.ravel(), grid, dn).reshape(z2.shape)
                    psi = np.minimum(psi, vz.min(axis=1))
                    row = np.maximum(np.maximum(f - y, 0.0), psi)
                    if not self.american:
                        row = np.minimum(np.maximum(g - y, 0.0), row)
                    J[lo:hi] = row
                values[(k, idx)] = J
                support[(k, idx)] = s
            # free the deepest level
            for idx in range(pf.node_count(k + 1)):
                del values[(k + 1, idx)]
        self._up = values[(1, pf.child_up(0, 0))]
        self._dn = values[(1, pf.child_down(0, 0))]
        self._w = w
        self._tz = tz

    def root_value(self, x: float) -> float:
        """Root Bellman step evaluated directly at x (no root-grid interpolation)."""
        m, pf = self.model, self.payoffs
        p, a1, a2 = m.p_obj, m.a1, m.a2
        grid, w, tz = self.grid, self._w, self._tz
        u = x * w
        q1 = np.maximum(x + u * a1, 0.0)
        q2 = np.maximum(x + u * a2, 0.0)
        v = p * np.interp(q1, grid, self._up) + (1 - p) * np.interp(q2, grid, self._dn)
        best = int(np.argmin(v))
        psi = float(v[best])
        ul = u[max(best - 1, 0)]
        uh = u[min(best + 1, len(u) - 1)]
        uz = ul + (uh - ul) * tz
        z1 = np.maximum(x + uz * a1, 0.0)
        z2 = np.maximum(x + uz * a2, 0.0)
        vz = p * np.interp(z1, grid, self._up) + (1 - p) * np.interp(z2, grid, self._dn)
        psi = min(psi, float(vz.min()))
        j = max(max(float(pf.f[0][0]) - x, 0.0), psi)
        if not self.american:
            j = min(max(float(pf.g[0][0]) - x, 0.0), j)
        return j
