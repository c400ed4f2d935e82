"""
tdoa_homotopy.polysys
=====================

Sparse multivariate polynomials and polynomial systems over complex
coefficients.
"""

import logging

import numpy as np

from .errors import DimensionError, NonSquareSystemError

logger = logging.getLogger(__name__)


def _order_key(exponents):
    # graded lexicographic, highest degree first
    return (-sum(exponents), tuple(-e for e in exponents))


def _format_real(value):
    text = repr(float(value) + 0.0)
    if text.endswith('.0'):
        text = text[:-2]
    return text


def _format_coefficient(c):
    if c.imag == 0:
        return _format_real(c.real)
    return '({0}{1}{2}i)'.format(_format_real(c.real),
                                 '+' if c.imag >= 0 else '-',
                                 _format_real(abs(c.imag)))


def _format_term(c, exponents):
    factors = []
    for i, e in enumerate(exponents):
        if e == 1:
            factors.append('x{0}'.format(i))
        elif e > 1:
            factors.append('x{0}^{1}'.format(i, e))
    if not factors:
        return _format_coefficient(c)
    return _format_coefficient(c) + '*' + '*'.join(factors)


class Poly(object):
    """A polynomial in ``nvars`` variables stored as a canonical term list.

    ``terms`` is an iterable of ``(coefficient, exponents)`` pairs. Repeated
    exponent vectors are merged, zero coefficients are dropped and the terms
    are kept in graded lexicographic order.
    """

    def __init__(self, terms, nvars):
        nvars = int(nvars)
        if nvars < 0:
            raise ValueError('nvars must be non-negative')
        collected = {}
        for coefficient, exponents in terms:
            exponents = tuple(int(e) for e in exponents)
            if len(exponents) != nvars:
                raise DimensionError(
                    'exponent vector {0} does not have {1} entries'.format(
                        exponents, nvars))
            if any(e < 0 for e in exponents):
                raise ValueError('negative exponent in {0}'.format(exponents))
            collected[exponents] = collected.get(exponents, 0j) + \
                complex(coefficient)
        self.nvars = nvars
        self.terms = tuple(
            (c, e) for e, c in sorted(collected.items(),
                                      key=lambda item: _order_key(item[0]))
            if c != 0)

    @classmethod
    def constant(cls, value, nvars):
        return cls([(value, (0,) * nvars)], nvars)

    @classmethod
    def variable(cls, index, nvars):
        if not 0 <= index < nvars:
            raise DimensionError('variable index {0} out of range for {1} '
                                 'variables'.format(index, nvars))
        exponents = [0] * nvars
        exponents[index] = 1
        return cls([(1.0, exponents)], nvars)

    def _coerce(self, other):
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise DimensionError(
                    'cannot combine polynomials in {0} and {1} '
                    'variables'.format(self.nvars, other.nvars))
            return other
        return Poly.constant(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        return Poly(self.terms + other.terms, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Poly([(-c, e) for c, e in self.terms], self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        terms = []
        for c1, e1 in self.terms:
            for c2, e2 in other.terms:
                terms.append((c1 * c2, tuple(a + b for a, b in zip(e1, e2))))
        return Poly(terms, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, power):
        if int(power) != power or power < 0:
            raise ValueError('only non-negative integer powers are supported')
        result = Poly.constant(1.0, self.nvars)
        for _ in range(int(power)):
            result = result * self
        return result

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __hash__(self):
        return hash((self.nvars, self.terms))

    def __str__(self):
        if not self.terms:
            return '0'
        parts = []
        for i, (c, e) in enumerate(self.terms):
            if i == 0:
                parts.append(_format_term(c, e))
            elif c.imag == 0 and c.real < 0:
                parts.append(' - ' + _format_term(-c, e))
            else:
                parts.append(' + ' + _format_term(c, e))
        return ''.join(parts)

    def __repr__(self):
        return '<Poly nvars={0}: {1}>'.format(self.nvars, self)

    def is_zero(self):
        return not self.terms

    def evaluate(self, point):
        point = [complex(v) for v in point]
        if len(point) != self.nvars:
            raise DimensionError('point has {0} coordinates, expected '
                                 '{1}'.format(len(point), self.nvars))
        total = 0j
        for c, exponents in self.terms:
            value = c
            for x, e in zip(point, exponents):
                if e:
                    value *= x ** e
            total += value
        return total

    __call__ = evaluate

    def differentiate(self, index):
        if not 0 <= index < self.nvars:
            raise DimensionError('variable index {0} out of range for {1} '
                                 'variables'.format(index, self.nvars))
        terms = []
        for c, exponents in self.terms:
            e = exponents[index]
            if e:
                lowered = list(exponents)
                lowered[index] = e - 1
                terms.append((c * e, lowered))
        return Poly(terms, self.nvars)

    def total_degree(self):
        return max([sum(e) for _, e in self.terms] or [0])

    def degree_in(self, index):
        return max([e[index] for _, e in self.terms] or [0])

    def homogenize(self, degree=None):
        """Homogenize to ``degree`` with a new variable at index 0."""
        degree = self.total_degree() if degree is None else int(degree)
        if degree < self.total_degree():
            raise ValueError('cannot homogenize a degree {0} polynomial to '
                             'degree {1}'.format(self.total_degree(), degree))
        return Poly([(c, (degree - sum(e),) + e) for c, e in self.terms],
                    self.nvars + 1)


def poly_arith(a, b, op):
    """Apply ``op`` (``'add'``, ``'sub'`` or ``'mul'``) to two polynomials."""
    if not isinstance(a, Poly) or not isinstance(b, Poly):
        raise TypeError('poly_arith expects two Poly instances')
    if a.nvars != b.nvars:
        raise DimensionError('cannot combine polynomials in {0} and {1} '
                             'variables'.format(a.nvars, b.nvars))
    if op == 'add':
        return a + b
    if op == 'sub':
        return a - b
    if op == 'mul':
        return a * b
    raise ValueError('unknown operation {0!r}'.format(op))


def poly_eval(p, point):
    return p.evaluate(point)


def differentiate(p, index):
    return p.differentiate(index)


def total_degree(p):
    return p.total_degree()


class _BatchEvaluator(object):
    """Evaluates a system and its Jacobian at many points at once.

    Every monomial of the system and of its first partial derivatives is
    collected once. The values at P points are one power table, one product
    over the variables and two matrix products.
    """

    def __init__(self, system):
        n = system.nvars
        npolys = len(system)
        derivatives = system.derivatives()
        index = {}
        for p in system:
            for _, e in p.terms:
                index.setdefault(e, len(index))
        for row in derivatives:
            for d in row:
                for _, e in d.terms:
                    index.setdefault(e, len(index))
        exponents = np.zeros((len(index), n), dtype=int)
        for e, k in index.items():
            exponents[k] = e
        values = np.zeros((len(index), npolys), dtype=complex)
        jacobian = np.zeros((len(index), npolys * n), dtype=complex)
        for i, p in enumerate(system):
            for c, e in p.terms:
                values[index[e], i] = c
        for i, row in enumerate(derivatives):
            for j, d in enumerate(row):
                for c, e in d.terms:
                    jacobian[index[e], i * n + j] = c
        self.nvars = n
        self.npolys = npolys
        self.exponents = exponents
        self.max_degree = int(exponents.max()) if exponents.size else 0
        self.value_coefficients = values
        self.jacobian_coefficients = jacobian
        logger.debug('compiled %d polynomials into %d monomials', npolys,
                     len(index))

    def __call__(self, points, jacobian=True):
        points = np.asarray(points, dtype=complex)
        if points.ndim != 2 or points.shape[1] != self.nvars:
            raise DimensionError('expected points of shape (P, {0}), got '
                                 '{1}'.format(self.nvars, points.shape))
        npoints = points.shape[0]
        powers = np.empty((self.max_degree + 1, npoints, self.nvars),
                          dtype=complex)
        powers[0] = 1.0
        for d in range(1, self.max_degree + 1):
            powers[d] = powers[d - 1] * points
        monomials = np.ones((npoints, len(self.exponents)), dtype=complex)
        for v in range(self.nvars):
            column = self.exponents[:, v]
            if column.any():
                monomials *= powers[:, :, v][column].T
        values = monomials @ self.value_coefficients
        if not jacobian:
            return values, None
        jac = (monomials @ self.jacobian_coefficients).reshape(
            npoints, self.npolys, self.nvars)
        return values, jac


class PolySystem(object):
    """An ordered list of polynomials sharing the same variables."""

    def __init__(self, polys, nvars=None):
        polys = tuple(polys)
        if nvars is None:
            if not polys:
                raise ValueError('cannot infer nvars of an empty system')
            nvars = polys[0].nvars
        for p in polys:
            if p.nvars != nvars:
                raise DimensionError('polynomial in {0} variables in a system '
                                     'of {1} variables'.format(p.nvars,
                                                               nvars))
        self.polys = polys
        self.nvars = nvars
        self._derivatives = None
        self._evaluator = None

    def __len__(self):
        return len(self.polys)

    def __iter__(self):
        return iter(self.polys)

    def __getitem__(self, index):
        return self.polys[index]

    def __eq__(self, other):
        if not isinstance(other, PolySystem):
            return NotImplemented
        return self.nvars == other.nvars and self.polys == other.polys

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __hash__(self):
        return hash((self.nvars, self.polys))

    def __str__(self):
        return '\n'.join(str(p) for p in self.polys)

    @property
    def is_square(self):
        return len(self.polys) == self.nvars

    def degrees(self):
        return [p.total_degree() for p in self.polys]

    def bezout_number(self):
        count = 1
        for d in self.degrees():
            count *= d
        return count

    def homogenize(self):
        return PolySystem([p.homogenize() for p in self.polys],
                          self.nvars + 1)

    def evaluate(self, point):
        return np.array([p.evaluate(point) for p in self.polys],
                        dtype=complex)

    __call__ = evaluate

    def derivatives(self):
        if self._derivatives is None:
            self._derivatives = tuple(
                tuple(p.differentiate(j) for j in range(self.nvars))
                for p in self.polys)
        return self._derivatives

    def jacobian(self, point):
        if not self.is_square:
            raise NonSquareSystemError(
                'jacobian requires a square system, got {0} equations in {1} '
                'variables'.format(len(self), self.nvars))
        return np.array([[d.evaluate(point) for d in row]
                         for row in self.derivatives()], dtype=complex)

    def evaluate_batch(self, points, jacobian=True):
        """Return ``(values, jacobians)`` at every row of ``points``."""
        if self._evaluator is None:
            self._evaluator = _BatchEvaluator(self)
        return self._evaluator(points, jacobian=jacobian)


def jacobian(system, point):
    return system.jacobian(point)
