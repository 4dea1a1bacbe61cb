"""Symbolic differential operators in (q, p, z), d = m = 1.

A DiffOp is a formal sum c0 + sum_i c_i d_i + sum_{i<=j} c_ij d_i d_j with
sympy coefficients. V is an undefined function of q, so identities are
checked for arbitrary smooth potentials. Operators act on expressions
through ``__call__``, compose with ``*`` and take adjoints in L^2 of
exp(-H), H = beta (V(q) + p^2/2 + z^2/2).
"""

from dataclasses import dataclass, field

import sympy

from ..core.errors import ValidationError
from ..core.logging import get_logger

logger = get_logger(__name__)

q, p, z = sympy.symbols("q p z", real=True)
VARIABLES = (q, p, z)
V = sympy.Function("V")(q)


def _clean(expr) -> sympy.Expr:
    return sympy.expand(sympy.simplify(sympy.expand(expr)))


@dataclass(frozen=True)
class DiffOp:
    """Differential operator of order <= 2 in canonical form."""

    zeroth: sympy.Expr = sympy.Integer(0)
    first: tuple[tuple[sympy.Symbol, sympy.Expr], ...] = ()
    second: tuple[tuple[tuple[sympy.Symbol, sympy.Symbol], sympy.Expr], ...] = ()
    name: str = field(default="", compare=False)

    @classmethod
    def build(cls, zeroth=0, first=None, second=None, name: str = "") -> "DiffOp":
        first = first or {}
        second = second or {}
        order = {v: i for i, v in enumerate(VARIABLES)}
        merged_second: dict[tuple, sympy.Expr] = {}
        for (a, b), c in second.items():
            key = tuple(sorted((a, b), key=order.__getitem__))
            merged_second[key] = merged_second.get(key, 0) + c
        f_terms = tuple(
            (v, _clean(first[v])) for v in VARIABLES if v in first and _clean(first[v]) != 0
        )
        s_terms = tuple(
            (k, _clean(c)) for k, c in sorted(merged_second.items(), key=lambda kv: (order[kv[0][0]], order[kv[0][1]]))
            if _clean(c) != 0
        )
        return cls(_clean(zeroth), f_terms, s_terms, name)

    @classmethod
    def identity(cls) -> "DiffOp":
        return cls.build(1, name="Id")

    @classmethod
    def partial(cls, var: sympy.Symbol, coefficient=1) -> "DiffOp":
        return cls.build(0, {var: coefficient})

    # ------------------------------------------------------------------
    # Action and algebra
    # ------------------------------------------------------------------

    @property
    def order(self) -> int:
        return 2 if self.second else (1 if self.first else 0)

    def __call__(self, f) -> sympy.Expr:
        out = self.zeroth * f
        for v, c in self.first:
            out += c * sympy.diff(f, v)
        for (a, b), c in self.second:
            out += c * sympy.diff(f, a, b)
        return out

    def _as_dicts(self):
        return self.zeroth, dict(self.first), dict(self.second)

    def __add__(self, other: "DiffOp") -> "DiffOp":
        z0, f0, s0 = self._as_dicts()
        z1, f1, s1 = other._as_dicts()
        first = {v: f0.get(v, 0) + f1.get(v, 0) for v in set(f0) | set(f1)}
        second = {k: s0.get(k, 0) + s1.get(k, 0) for k in set(s0) | set(s1)}
        return DiffOp.build(z0 + z1, first, second)

    def __neg__(self) -> "DiffOp":
        return self.scale(-1)

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        return self + (-other)

    def scale(self, c) -> "DiffOp":
        z0, f0, s0 = self._as_dicts()
        return DiffOp.build(c * z0, {v: c * x for v, x in f0.items()}, {k: c * x for k, x in s0.items()})

    def __rmul__(self, c) -> "DiffOp":
        return self.scale(c)

    def __mul__(self, other):
        """Composition (self o other), or scaling by a number or expression."""
        if not isinstance(other, DiffOp):
            return self.scale(other)
        if self.order + other.order > 2:
            raise ValidationError(
                f"composition would have order {self.order + other.order} (only <= 2 supported)"
            )
        F = sympy.Function("F")(*VARIABLES)
        return from_action(self(other(F)), F)

    def adjoint(self, beta=1) -> "DiffOp":
        """Adjoint in L^2(exp(-H)) of a first-order operator.

        (c d_i)* = -c d_i - d_i c + c d_i H.
        """
        if self.second:
            raise ValidationError("adjoint is implemented for first-order operators")
        H = sympy.sympify(beta) * (V + p**2 / 2 + z**2 / 2)
        zeroth = self.zeroth
        first = {}
        for v, c in self.first:
            first[v] = -c
            zeroth = zeroth - sympy.diff(c, v) + c * sympy.diff(H, v)
        return DiffOp.build(zeroth, first, name=f"{self.name}*" if self.name else "")

    def is_zero(self) -> bool:
        return self.zeroth == 0 and not self.first and not self.second

    def equals(self, other: "DiffOp") -> bool:
        return (self - other).is_zero()

    def render(self) -> str:
        if self.is_zero():
            return "0"
        parts = []
        if self.zeroth != 0:
            parts.append(f"({sympy.sstr(self.zeroth)})")
        parts += [f"({sympy.sstr(c)})*d_{v}" for v, c in self.first]
        parts += [f"({sympy.sstr(c)})*d_{a}d_{b}" for (a, b), c in self.second]
        return " + ".join(parts)

    def __str__(self) -> str:
        return self.render()


def from_action(expr, F) -> DiffOp:
    """Read an operator back from its action on a generic function F."""
    expr = sympy.expand(expr)
    replacements = {}
    first, second = {}, {}
    for d in expr.atoms(sympy.Derivative):
        if d.expr != F:
            continue
        vars_ = [v for v, count in d.variable_count for _ in range(count)]
        if len(vars_) > 2:
            raise ValidationError("derivatives above order 2 are not supported")
        s = sympy.Dummy()
        replacements[d] = s
        if len(vars_) == 1:
            first[vars_[0]] = s
        else:
            second[tuple(vars_)] = s
    f0 = sympy.Dummy()
    replacements[F] = f0
    linear = sympy.expand(expr.xreplace(replacements))
    return DiffOp.build(
        linear.coeff(f0),
        {v: linear.coeff(s) for v, s in first.items()},
        {k: linear.coeff(s) for k, s in second.items()},
    )


def commutator(X: DiffOp, Y: DiffOp) -> DiffOp:
    return X * Y - Y * X


# ============================================================================
# Unit-constant operators (alpha = lambda = beta = 1)
# ============================================================================


def unit_operators() -> dict[str, DiffOp]:
    """A = -d_z, B the transport part, C = [A, B], C2 = [C, B] and adjoints."""
    Vp = sympy.diff(V, q)
    A = DiffOp.build(0, {z: -1}, name="A")
    B = DiffOp.build(0, {q: -p, p: Vp - z, z: p}, name="B")
    C = commutator(A, B)
    C2 = commutator(C, B)
    ops = {"A": A, "B": B, "C": C, "C2": C2}
    ops["A*"] = A.adjoint()
    ops["C*"] = C.adjoint()
    ops["C2*"] = C2.adjoint()
    return ops


@dataclass
class IdentityCheck:
    name: str
    computed: str
    expected: str
    holds: bool


def commutator_table() -> list[IdentityCheck]:
    """Check the commutator identities of the hypocoercive structure."""
    ops = unit_operators()
    A, B, C, C2 = ops["A"], ops["B"], ops["C"], ops["C2"]
    A_adj, C_adj, C2_adj = ops["A*"], ops["C*"], ops["C2*"]
    Id = DiffOp.identity()
    zero = DiffOp.build(0)
    Vpp = sympy.diff(V, q, 2)
    d_p = DiffOp.partial(p)

    cases = [
        ("C = [A, B]", commutator(A, B), d_p),
        ("C2 = [C, B]", commutator(C, B), DiffOp.build(0, {z: 1, q: -1})),
        ("[A, A] = 0", commutator(A, A), zero),
        ("[A, C] = 0", commutator(A, C), zero),
        ("[A, C2] = 0", commutator(A, C2), zero),
        ("[A, A*] = Id", commutator(A, A_adj), Id),
        ("[C, A*] = 0", commutator(C, A_adj), zero),
        ("[C2, A*] = -Id", commutator(C2, A_adj), -Id),
        ("[C2, B] = -V'' d_p - d_p", commutator(C2, B), DiffOp.build(0, {p: -Vpp - 1})),
        ("[C, C*] = Id", commutator(C, C_adj), Id),
        ("[C2*, C2] = -Id - V''", commutator(C2_adj, C2), DiffOp.build(-1 - Vpp)),
        ("B* = -B", B.adjoint(), -B),
    ]
    results = []
    for name, computed, expected in cases:
        holds = computed.equals(expected)
        if not holds:
            logger.error(f"Commutator identity failed: {name}: got {computed}, expected {expected}")
        results.append(IdentityCheck(name, computed.render(), expected.render(), holds))
    return results
