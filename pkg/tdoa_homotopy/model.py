"""
tdoa_homotopy.model
===================

The TDOA self-calibration model: pseudoranges, ground truth networks, the
compaction matrix, the dual polynomial systems and the upgrade from a dual
solution back to node positions.

Receivers ``r_i`` and transmitters ``s_j`` are 2D points, ``o_j`` is the
offset of transmitter ``j`` in distance units and the pseudorange is
``f_ij = |r_i - s_j| + o_j``.
"""

import logging

import numpy as np
import scipy.linalg

from .errors import DimensionError, InfeasibleSolutionError, \
    UnsupportedConfigurationError
from .polysys import Poly, PolySystem

logger = logging.getLogger(__name__)

#: shapes of the dual systems that can be built directly
DUAL_SHAPES = {
    '6r3s': (6, 3),
    '5r4s': (5, 4),
}

# taxonomy of (m, n) configurations:
#   '-' underdetermined, 'u' unsolved, 'O' solved by this package,
#   'X' solved by earlier algebraic solvers, '*' reducible to a solved one
CONFIGURATIONS = {
    (4, 3): '-', (4, 4): '-', (4, 5): 'u', (4, 6): 'u',
    (5, 3): '-', (5, 4): 'O', (5, 5): 'O', (5, 6): 'X',
    (6, 3): 'O', (6, 4): 'O/X', (6, 5): '*', (6, 6): '*',
    (7, 3): 'O', (7, 4): 'X', (7, 5): '*', (7, 6): '*',
    (8, 3): '*', (8, 4): '*', (8, 5): '*', (8, 6): '*',
    (9, 3): 'X', (9, 4): '*', (9, 5): '*', (9, 6): '*',
}


def excess_constraint(m, n):
    """Number of constraints minus unknowns of an ``m`` by ``n`` network."""
    if m < 1 or n < 1:
        raise ValueError('networks need at least one receiver and one '
                         'transmitter')
    return m * n - 2 * m - 3 * n + 3


def classify(m, n):
    excess = excess_constraint(m, n)
    if excess < 0:
        return 'underdetermined'
    if excess == 0:
        return 'minimal'
    return 'subminimal'


def configuration_status(m, n):
    """Status code of a configuration, or None outside the known table."""
    if (m, n) in CONFIGURATIONS:
        return CONFIGURATIONS[(m, n)]
    if excess_constraint(m, n) < 0:
        return '-'
    return None


class PseudorangeMatrix(object):
    def __init__(self, f):
        f = np.array(f, dtype=float)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise DimensionError('pseudoranges must be a non-empty m x n '
                                 'matrix, got shape {0}'.format(f.shape))
        if not np.all(np.isfinite(f)):
            raise ValueError('pseudoranges must be finite')
        f.setflags(write=False)
        self.f = f

    @property
    def m(self):
        return self.f.shape[0]

    @property
    def n(self):
        return self.f.shape[1]

    @property
    def shape(self):
        return self.f.shape

    def select(self, rows=None, cols=None):
        f = self.f
        if rows is not None:
            f = f[list(rows), :]
        if cols is not None:
            f = f[:, list(cols)]
        return PseudorangeMatrix(f)

    def scaled(self, factor):
        return PseudorangeMatrix(self.f * factor)

    def __eq__(self, other):
        if not isinstance(other, PseudorangeMatrix):
            return NotImplemented
        return np.array_equal(self.f, other.f)

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __repr__(self):
        return '<PseudorangeMatrix {0}r/{1}s>'.format(self.m, self.n)


def _points(points, name):
    points = np.array(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DimensionError('{0} must be an array of 2D points'.format(name))
    return points


def _squared_distances(receivers, transmitters):
    diff = receivers[:, None, :] - transmitters[None, :, :]
    return (diff ** 2).sum(axis=2)


def _rotation_to_x_axis(point):
    rho = np.hypot(point[0], point[1])
    if rho == 0:
        return np.eye(2), rho
    c, s = point[0] / rho, point[1] / rho
    return np.array([[c, s], [-s, c]]), rho


class NetworkGroundTruth(object):
    def __init__(self, receivers, transmitters, offsets):
        self.receivers = _points(receivers, 'receivers')
        self.transmitters = _points(transmitters, 'transmitters')
        self.offsets = np.array(offsets, dtype=float).reshape(-1)
        if len(self.offsets) != len(self.transmitters):
            raise DimensionError('one offset per transmitter is required')

    @property
    def m(self):
        return len(self.receivers)

    @property
    def n(self):
        return len(self.transmitters)

    def pseudoranges(self):
        distances = np.sqrt(_squared_distances(self.receivers,
                                               self.transmitters))
        return PseudorangeMatrix(distances + self.offsets[None, :])

    def transformed(self, rotation, translation=(0.0, 0.0)):
        """Apply ``x -> rotation x + translation`` to every node."""
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        return NetworkGroundTruth(self.receivers @ rotation.T + translation,
                                  self.transmitters @ rotation.T + translation,
                                  self.offsets)

    def gauge_normalized(self):
        """Move ``r_1`` to the origin and ``r_2`` onto the positive x axis."""
        origin = self.receivers[0]
        receivers = self.receivers - origin
        transmitters = self.transmitters - origin
        rotation, rho = _rotation_to_x_axis(receivers[1]) if self.m > 1 \
            else (np.eye(2), 0.0)
        receivers = receivers @ rotation.T
        transmitters = transmitters @ rotation.T
        receivers[0] = 0.0
        if self.m > 1:
            receivers[1] = (rho, 0.0)
        return NetworkGroundTruth(receivers, transmitters, self.offsets)

    def to_calibration(self):
        calibration = Calibration(self.receivers, self.transmitters,
                                  self.offsets)
        calibration.primal_residual = primal_residual(calibration,
                                                      self.pseudoranges())
        return calibration


class DualSolution(object):
    """Dual unknowns: the symmetric 2x2 matrix H, the vector b, offsets."""

    def __init__(self, h11, h12, h22, b, offsets):
        self.h11 = float(h11)
        self.h12 = float(h12)
        self.h22 = float(h22)
        self.b = np.array(b, dtype=float).reshape(2)
        self.offsets = np.array(offsets, dtype=float).reshape(-1)

    @property
    def H(self):
        return np.array([[self.h11, self.h12], [self.h12, self.h22]])

    def determinant(self):
        return self.h11 * self.h22 - self.h12 * self.h12

    def is_positive_definite(self):
        return self.h11 > 0 and self.determinant() > 0

    def vector(self):
        return np.concatenate([[self.h11, self.h12, self.h22], self.b,
                               self.offsets])

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1], x[2], x[3:5], x[5:])

    def __repr__(self):
        return '<DualSolution H={0} b={1} offsets={2}>'.format(
            self.H.tolist(), self.b.tolist(), self.offsets.tolist())


class Calibration(object):
    def __init__(self, receivers, transmitters, offsets, primal_residual=0.0):
        self.receivers = _points(receivers, 'receivers')
        self.transmitters = _points(transmitters, 'transmitters')
        self.offsets = np.array(offsets, dtype=float).reshape(-1)
        if len(self.offsets) != len(self.transmitters):
            raise DimensionError('one offset per transmitter is required')
        self.primal_residual = float(primal_residual)

    @property
    def m(self):
        return len(self.receivers)

    @property
    def n(self):
        return len(self.transmitters)

    def positions(self):
        return np.vstack([self.receivers, self.transmitters])

    def sort_key(self):
        return tuple(self.positions().ravel()) + tuple(self.offsets)

    def extended(self, receivers=(), transmitters=(), offsets=()):
        """Copy with extra nodes appended. The residual is left at zero."""
        receivers = np.array(receivers, dtype=float).reshape(-1, 2)
        transmitters = np.array(transmitters, dtype=float).reshape(-1, 2)
        return Calibration(np.vstack([self.receivers, receivers]),
                           np.vstack([self.transmitters, transmitters]),
                           np.concatenate([self.offsets,
                                           np.array(offsets, dtype=float)]))

    def __repr__(self):
        return '<Calibration {0}r/{1}s residual={2:.3g}>'.format(
            self.m, self.n, self.primal_residual)


class DualLayout(object):
    """Variable order (h11, h12, h22, b1, b2, o1, ..., ok) of a dual system."""

    names = ('h11', 'h12', 'h22', 'b1', 'b2')

    def __init__(self, noffsets):
        if noffsets < 1:
            raise ValueError('a dual layout needs at least one offset')
        self.noffsets = int(noffsets)
        self.nvars = 5 + self.noffsets

    @classmethod
    def for_kind(cls, kind):
        if isinstance(kind, DualLayout):
            return kind
        if kind not in DUAL_SHAPES:
            raise UnsupportedConfigurationError(
                'no dual system for configuration {0!r}'.format(kind))
        return cls(DUAL_SHAPES[kind][1])

    def offset(self, j):
        if not 0 <= j < self.noffsets:
            raise DimensionError('offset {0} out of range'.format(j))
        return 5 + j

    def variable_names(self):
        return list(self.names) + ['o{0}'.format(j + 1)
                                   for j in range(self.noffsets)]

    def variables(self):
        return [Poly.variable(i, self.nvars) for i in range(self.nvars)]


def squared_distance_poly(f_ij, offset_var, nvars):
    """``(f_ij - o)^2`` with ``o`` the variable at index ``offset_var``."""
    o = Poly.variable(offset_var, nvars)
    return (float(f_ij) - o) * (float(f_ij) - o)


def compaction_values(d2):
    """Numeric compaction matrix of an m x n matrix of squared distances."""
    d2 = np.asarray(d2, dtype=float)
    return d2[1:, 1:] - d2[:1, 1:] - d2[1:, :1] + d2[0, 0]


def compaction_matrix(pr, layout=None):
    """Compaction matrix with entries affine in the offset variables."""
    if pr.m < 2 or pr.n < 2:
        raise DimensionError('the compaction matrix needs at least 2 '
                             'receivers and 2 transmitters')
    layout = layout or DualLayout(pr.n)
    if layout.noffsets < pr.n:
        raise DimensionError('layout has {0} offsets for {1} '
                             'transmitters'.format(layout.noffsets, pr.n))
    d2 = [[squared_distance_poly(pr.f[i, j], layout.offset(j), layout.nvars)
           for j in range(pr.n)] for i in range(pr.m)]
    return [[d2[i][j] - d2[0][j] - d2[i][0] + d2[0][0]
             for j in range(1, pr.n)] for i in range(1, pr.m)]


def _det3(a):
    return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
            a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
            a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))


def rank_minor_constraints(compaction, m, n):
    """The (m-3)(n-3) independent 3x3 minors of a rank 2 compaction matrix.

    Minors use rows {1, 2, k} and columns {1, 2, l} of the compaction matrix.
    """
    if m < 4 or n < 4:
        raise DimensionError('rank constraints need m >= 4 and n >= 4')
    if len(compaction) != m - 1 or any(len(row) != n - 1
                                       for row in compaction):
        raise DimensionError('compaction matrix is not ({0}) x ({1})'.format(
            m - 1, n - 1))
    minors = []
    for k in range(2, m - 1):
        for l in range(2, n - 1):
            rows = (0, 1, k)
            cols = (0, 1, l)
            minors.append(_det3([[compaction[i][j] for j in cols]
                                 for i in rows]))
    return minors


def build_dual_system(pr, kind):
    """Dual polynomial system of a 6r/3s network or of the 5r/4s core.

    Denominators are cleared with ``inv(H) = adj(H) / det(H)``:

    * (A)  d11^2 det(H) - b' adj(H) b
    * (B)  (d1j^2 - d11^2) det(H) - adj(H)_jj / 4 + b' adj(H) e_j, j = 2, 3
    * (C)  (di1^2 - d11^2) - D_i H D_i' + 2 b' D_i', i = 2..m

    with ``D_i`` the rows of the compaction matrix of the first three
    transmitters. The 5r/4s core adds the rank minors of the full compaction.
    """
    if kind not in DUAL_SHAPES:
        raise UnsupportedConfigurationError(
            'no dual system for configuration {0!r}'.format(kind))
    if pr.shape != DUAL_SHAPES[kind]:
        raise DimensionError('{0} needs a {1} x {2} pseudorange matrix, got '
                             '{3} x {4}'.format(kind, DUAL_SHAPES[kind][0],
                                                DUAL_SHAPES[kind][1], pr.m,
                                                pr.n))
    layout = DualLayout.for_kind(kind)
    nvars = layout.nvars
    h11, h12, h22, b1, b2 = layout.variables()[:5]
    det = h11 * h22 - h12 * h12
    adj = [[h22, -h12], [-h12, h11]]
    b = [b1, b2]

    def d2(i, j):
        return squared_distance_poly(pr.f[i, j], layout.offset(j), nvars)

    def b_adj(column):
        return b[0] * adj[0][column] + b[1] * adj[1][column]

    polys = [d2(0, 0) * det - (b[0] * b_adj(0) + b[1] * b_adj(1))]
    for j in (1, 2):
        polys.append((d2(0, j) - d2(0, 0)) * det - 0.25 * adj[j - 1][j - 1] +
                     b_adj(j - 1))
    compaction = compaction_matrix(pr.select(cols=range(3)), layout)
    for i in range(1, pr.m):
        u, v = compaction[i - 1]
        quadratic = h11 * u * u + 2.0 * h12 * u * v + h22 * v * v
        polys.append((d2(i, 0) - d2(0, 0)) - quadratic +
                     2.0 * (b1 * u + b2 * v))
    if kind == '5r4s':
        polys.extend(rank_minor_constraints(compaction_matrix(pr, layout),
                                            pr.m, pr.n))
    return PolySystem(polys, nvars)


def primal_residual(calibration, pr):
    """Largest violation of ``|r_i - s_j|^2 = (f_ij - o_j)^2``."""
    if (calibration.m, calibration.n) != pr.shape:
        raise DimensionError('calibration is {0}r/{1}s but pseudoranges are '
                             '{2}r/{3}s'.format(calibration.m, calibration.n,
                                                pr.m, pr.n))
    d2 = _squared_distances(calibration.receivers, calibration.transmitters)
    measured = (pr.f - calibration.offsets[None, :]) ** 2
    return float(np.max(np.abs(d2 - measured)))


def upgrade_solution(ds, pr):
    """Recover positions from a positive definite dual solution.

    Uses the first three transmitters. ``inv(H) = L'L`` is factored with L
    upper triangular, which fixes the direction of ``s_2 - s_1``; the result
    is then rotated so that ``r_2`` lies on the positive x axis.
    """
    if pr.m < 2 or pr.n < 3:
        raise DimensionError('upgrade needs at least 2 receivers and 3 '
                             'transmitters')
    if len(ds.offsets) < 3:
        raise DimensionError('upgrade needs three offsets')
    if not ds.is_positive_definite():
        raise InfeasibleSolutionError('H is not positive definite')
    try:
        upper = scipy.linalg.cholesky(np.linalg.inv(ds.H), lower=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise InfeasibleSolutionError('Cholesky factorization failed: '
                                      '{0}'.format(exc))
    offsets = ds.offsets[:3]
    compaction = compaction_values((pr.f[:, :3] - offsets[None, :]) ** 2)
    receivers = np.zeros((pr.m, 2))
    receivers[1:] = np.linalg.solve(upper.T, compaction.T).T
    transmitters = np.array([upper @ ds.b,
                             upper @ (ds.b - [0.5, 0.0]),
                             upper @ (ds.b - [0.0, 0.5])])

    rotation, rho = _rotation_to_x_axis(receivers[1])
    receivers = receivers @ rotation.T
    transmitters = transmitters @ rotation.T
    receivers[0] = 0.0
    receivers[1] = (rho, 0.0)

    calibration = Calibration(receivers, transmitters, offsets)
    calibration.primal_residual = primal_residual(calibration,
                                                  pr.select(cols=range(3)))
    return calibration


def is_feasible(x, layout, reality_tol=1e-6):
    """Return the real DualSolution of ``x`` if it has positive definite H."""
    layout = DualLayout.for_kind(layout)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if len(x) != layout.nvars:
        raise DimensionError('expected {0} dual coordinates, got {1}'.format(
            layout.nvars, len(x)))
    if np.max(np.abs(x.imag)) >= reality_tol:
        return None
    solution = DualSolution.from_vector(x.real)
    if not solution.is_positive_definite():
        return None
    return solution


def is_real(x, reality_tol=1e-6):
    return bool(np.max(np.abs(np.asarray(x).imag)) < reality_tol)


def embed_ground_truth(gt):
    """Map a ground truth network to the dual unknowns (H, b, offsets).

    The network is moved to the gauge ``r_1 = 0``, ``r_2y = 0``; L is then
    the least squares solution of ``r_i' L = D_i`` over every receiver
    ``i >= 2``, with D the compaction of the true squared distances to the
    first three transmitters.
    """
    if gt.m < 3 or gt.n < 3:
        raise DimensionError('the dual embedding needs at least 3 receivers '
                             'and 3 transmitters')
    normalized = gt.gauge_normalized()
    d2 = _squared_distances(normalized.receivers, normalized.transmitters)
    compaction = compaction_values(d2[:, :3])
    L = scipy.linalg.lstsq(normalized.receivers[1:], compaction)[0]
    H = np.linalg.inv(L.T @ L)
    b = np.linalg.solve(L, normalized.transmitters[0])
    return DualSolution(H[0, 0], 0.5 * (H[0, 1] + H[1, 0]), H[1, 1], b,
                        normalized.offsets)
