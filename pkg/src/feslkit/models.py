"""Design-parametrized structural models.

Three model families are supported:

``two_bar``
    Two axial bars acting on a single degree of freedom; the design
    variables are the bar cross-section areas.
``shear_frame``
    A shear building with one horizontal degree of freedom per story and
    circular columns whose diameters are the design variables.
``planar_truss``
    A 2D frame of Euler-Bernoulli beam elements (three DOFs per node) with
    circular sections whose diameters are linked to the design variables.

All matrices are dense and restricted to the free DOFs.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._validation import DesignBoundsError, check_design, check_vector
from .damping import rayleigh_coefficient_sensitivity, rayleigh_damping

KINDS = ("two_bar", "shear_frame", "planar_truss")

# Roof truss benchmark: node coordinates [m], element connectivity (1-based)
# and the symmetric size groups of the seven diameters.
TRUSS_NODES = np.array([
    [-6.0, 0.0],
    [-3.0, 0.0],
    [0.0, 0.0],
    [3.0, 0.0],
    [6.0, 0.0],
    [-4.0, 1.0],
    [4.0, 1.0],
    [-2.0, 2.0],
    [2.0, 2.0],
    [0.0, 3.0],
])
TRUSS_ELEMENTS = np.array([
    [1, 6],
    [6, 2],
    [4, 7],
    [5, 7],
    [6, 8],
    [2, 8],
    [3, 8],
    [3, 9],
    [4, 9],
    [7, 9],
    [8, 10],
    [3, 10],
    [9, 10],
])
TRUSS_GROUPS = ((1, 4), (2, 3), (5, 10), (6, 9), (7, 8), (11, 13), (12,))
TRUSS_SUPPORT_NODES = (1, 2, 3, 4, 5)


class SingularStiffnessError(np.linalg.LinAlgError):
    """Stiffness matrix is not positive definite at the given design."""

    def __init__(self, message, design=None):
        super().__init__(message)
        self.design = design


@dataclass(frozen=True)
class DesignVector:
    """Design values with their box bounds."""

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = check_vector(self.lower, "lower")
        upper = check_vector(self.upper, "upper", lower.size)
        if np.any(lower <= 0.0):
            raise ValueError("lower bounds must be strictly positive")
        if np.any(upper < lower):
            raise ValueError("upper bounds must not be below lower bounds")
        values = check_design(self.values, lower, upper)
        for name, arr in (("values", values), ("lower", lower), ("upper", upper)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def size(self):
        return self.values.size

    def with_values(self, values):
        return DesignVector(values, self.lower, self.upper)


@dataclass(frozen=True)
class SystemMatrices:
    mass: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray

    @property
    def ndof(self):
        return self.stiffness.shape[0]


@dataclass(frozen=True)
class MatrixSensitivity:
    dmass: np.ndarray
    ddamping: np.ndarray
    dstiffness: np.ndarray
    variable_index: int


@dataclass(frozen=True)
class LinkingMap:
    """0/1 incidence matrix mapping design variables to element sizes."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2:
            raise ValueError("linking matrix must be 2-D")
        if not np.all((mat == 0.0) | (mat == 1.0)):
            raise ValueError("linking matrix must contain only 0 and 1")
        if not np.all(mat.sum(axis=1) == 1.0):
            raise ValueError("every element must belong to exactly one size group")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def from_groups(cls, groups, n_elements=None):
        """Build from a sequence of 1-based element groups, one per variable."""
        if n_elements is None:
            n_elements = max(max(g) for g in groups)
        mat = np.zeros((n_elements, len(groups)))
        for j, group in enumerate(groups):
            for b in group:
                mat[b - 1, j] = 1.0
        return cls(mat)

    @property
    def n_elements(self):
        return self.matrix.shape[0]

    @property
    def n_variables(self):
        return self.matrix.shape[1]

    def element_sizes(self, x):
        return self.matrix @ np.asarray(x, float)

    def group_of(self, element):
        return int(np.flatnonzero(self.matrix[element])[0])

    def elements_of(self, variable):
        return np.flatnonzero(self.matrix[:, variable])


@dataclass(frozen=True)
class DampingSpec:
    """``kind`` is ``"none"``, ``"constant"`` (value is c) or ``"rayleigh"``
    (value is the damping ratio)."""

    kind: str = "none"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "constant", "rayleigh"):
            raise ValueError(f"unknown damping kind {self.kind!r}")


def _frozen(arr, dtype=float):
    arr = np.array(arr, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ModelDefinition:
    """Immutable description of a design-parametrized structure.

    For ``two_bar`` and ``shear_frame`` the ``lengths`` field carries bar or
    column lengths and ``nodes``/``elements`` may be empty. ``floor_masses``
    is only used by ``shear_frame``. ``supports`` lists fixed global DOF
    indices of a ``planar_truss`` (three DOFs per node, 0-based).
    """

    kind: str
    youngs: np.ndarray
    density: np.ndarray
    lengths: np.ndarray = None
    nodes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    elements: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    supports: tuple = ()
    linking: LinkingMap = None
    damping: DampingSpec = DampingSpec()
    floor_masses: np.ndarray = None
    columns_per_story: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        nodes = _frozen(self.nodes).reshape(-1, 2)
        elements = _frozen(self.elements, int).reshape(-1, 2)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        if self.kind == "planar_truss":
            if elements.size == 0:
                raise ValueError("planar_truss needs elements")
            if elements.min() < 0 or elements.max() >= nodes.shape[0]:
                raise ValueError("element connectivity refers to unknown nodes")
            d = nodes[elements[:, 1]] - nodes[elements[:, 0]]
            lengths = np.hypot(d[:, 0], d[:, 1])
            if np.any(lengths <= 0.0):
                raise ValueError("zero-length element")
        else:
            if self.lengths is None:
                raise ValueError(f"{self.kind} needs element lengths")
            lengths = self.lengths
        lengths = _frozen(lengths).ravel()
        n_el = lengths.size
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "youngs", _frozen(np.broadcast_to(self.youngs, n_el)))
        object.__setattr__(self, "density", _frozen(np.broadcast_to(self.density, n_el)))
        object.__setattr__(self, "supports", tuple(sorted(int(s) for s in self.supports)))
        if self.linking is None:
            object.__setattr__(self, "linking", LinkingMap.identity(n_el))
        elif self.linking.n_elements != n_el:
            raise ValueError("linking map does not match the element count")
        if self.kind == "shear_frame":
            if self.floor_masses is None:
                raise ValueError("shear_frame needs floor masses")
            object.__setattr__(self, "floor_masses", _frozen(self.floor_masses).ravel())
            if self.floor_masses.size != n_el:
                raise ValueError("one floor mass per story is required")
        if self.kind == "two_bar" and self.damping.kind == "rayleigh":
            raise ValueError("two_bar has a single DOF; Rayleigh damping needs two")

    @property
    def n_elements(self):
        return self.lengths.size

    @property
    def n_variables(self):
        return self.linking.n_variables

    @property
    def free_dofs(self):
        if self.kind == "two_bar":
            return np.arange(1)
        if self.kind == "shear_frame":
            return np.arange(self.n_elements)
        all_dofs = np.arange(3 * self.nodes.shape[0])
        return np.setdiff1d(all_dofs, np.asarray(self.supports, dtype=int))

    @property
    def ndof(self):
        return self.free_dofs.size


# ---------------------------------------------------------------------------
# Benchmark factories

def two_bar_model(lengths=(1.0, 1.5), youngs=1.0, density=1.0, damping=0.1):
    return ModelDefinition(
        kind="two_bar", youngs=youngs, density=density, lengths=lengths,
        damping=DampingSpec("constant", damping),
    )


def shear_frame_model(story_height=3.5, youngs=200e9, floor_mass=4000.0,
                      damping_ratio=0.05, n_stories=2):
    lengths = np.full(n_stories, story_height)
    return ModelDefinition(
        kind="shear_frame", youngs=youngs, density=0.0, lengths=lengths,
        floor_masses=np.full(n_stories, floor_mass),
        damping=DampingSpec("rayleigh", damping_ratio),
    )


def roof_truss_model(youngs=200e9, density=7850.0):
    nodes = TRUSS_NODES
    supports = [3 * (n - 1) + j for n in TRUSS_SUPPORT_NODES for j in range(3)]
    return ModelDefinition(
        kind="planar_truss", youngs=youngs, density=density,
        nodes=nodes, elements=TRUSS_ELEMENTS - 1, supports=supports,
        linking=LinkingMap.from_groups(TRUSS_GROUPS, len(TRUSS_ELEMENTS)),
        damping=DampingSpec("none"),
    )


# ---------------------------------------------------------------------------
# Element matrices

def _design_array(model, x):
    if isinstance(x, DesignVector):
        values = x.values
    else:
        values = check_vector(x, "x", model.n_variables)
    if values.size != model.n_variables:
        raise ValueError(f"expected {model.n_variables} design variables, got {values.size}")
    if np.any(values <= 0.0):
        raise DesignBoundsError(f"design variables must be positive: x={values.tolist()}")
    return values


def beam_local_stiffness(youngs, area, inertia, length):
    l = length
    a = youngs * area / l
    b = youngs * inertia / l**3
    return np.array([
        [a, 0, 0, -a, 0, 0],
        [0, 12 * b, 6 * b * l, 0, -12 * b, 6 * b * l],
        [0, 6 * b * l, 4 * b * l**2, 0, -6 * b * l, 2 * b * l**2],
        [-a, 0, 0, a, 0, 0],
        [0, -12 * b, -6 * b * l, 0, 12 * b, -6 * b * l],
        [0, 6 * b * l, 2 * b * l**2, 0, -6 * b * l, 4 * b * l**2],
    ])


def beam_local_mass(density, area, length):
    l = length
    pattern = np.array([
        [140, 0, 0, 70, 0, 0],
        [0, 156, 22 * l, 0, 54, -13 * l],
        [0, 22 * l, 4 * l**2, 0, 13 * l, -3 * l**2],
        [70, 0, 0, 140, 0, 0],
        [0, 54, 13 * l, 0, 156, -22 * l],
        [0, -13 * l, -3 * l**2, 0, -22 * l, 4 * l**2],
    ])
    return density * area * l / 420.0 * pattern


def _beam_stiffness_by_diameter(youngs, diameter, length):
    area = np.pi * diameter**2 / 4.0
    inertia = np.pi * diameter**4 / 64.0
    return beam_local_stiffness(youngs, area, inertia, length)


def _beam_stiffness_diameter_derivative(youngs, diameter, length):
    darea = np.pi * diameter / 2.0
    dinertia = np.pi * diameter**3 / 16.0
    return beam_local_stiffness(youngs, darea, dinertia, length)


def _rotation(dx, dy):
    length = np.hypot(dx, dy)
    c, s = dx / length, dy / length
    r = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    t = np.zeros((6, 6))
    t[:3, :3] = r
    t[3:, 3:] = r
    return t


def _truss_element_data(model):
    coords = model.nodes
    out = []
    for e, (n1, n2) in enumerate(model.elements):
        d = coords[n2] - coords[n1]
        t = _rotation(d[0], d[1])
        dofs = np.r_[3 * n1:3 * n1 + 3, 3 * n2:3 * n2 + 3]
        out.append((e, t, dofs))
    return out


def _truss_scatter(model, element_mats):
    """Assemble rotated element matrices and reduce to the free DOFs."""
    n_total = 3 * model.nodes.shape[0]
    full = np.zeros((n_total, n_total))
    for (e, t, dofs), local in zip(_truss_element_data(model), element_mats):
        if local is None:
            continue
        full[np.ix_(dofs, dofs)] += t.T @ local @ t
    free = model.free_dofs
    return full[np.ix_(free, free)]


def _shear_stiffness(k):
    n = k.size
    mat = np.zeros((n, n))
    for i in range(n):
        mat[i, i] += k[i]
        if i > 0:
            mat[i - 1, i - 1] += k[i]
            mat[i - 1, i] -= k[i]
            mat[i, i - 1] -= k[i]
    return mat


def _raw_matrices(model, x):
    """Mass and stiffness (without damping) at design array ``x``."""
    if model.kind == "two_bar":
        k = np.sum(x * model.youngs / model.lengths)
        m = np.sum(0.5 * x * model.density * model.lengths)
        return np.array([[m]]), np.array([[k]])
    if model.kind == "shear_frame":
        inertia = np.pi * x**4 / 64.0
        k = model.columns_per_story * 3.0 * model.youngs * inertia / model.lengths**3
        return np.diag(model.floor_masses), _shear_stiffness(k)
    sizes = model.linking.element_sizes(x)
    stiff, mass = [], []
    for e in range(model.n_elements):
        area = np.pi * sizes[e] ** 2 / 4.0
        stiff.append(_beam_stiffness_by_diameter(model.youngs[e], sizes[e], model.lengths[e]))
        mass.append(beam_local_mass(model.density[e], area, model.lengths[e]))
    return _truss_scatter(model, mass), _truss_scatter(model, stiff)


def _raw_derivatives(model, x, i):
    """Exact ``dM/dx_i`` and ``dK/dx_i`` (without damping)."""
    if model.kind == "two_bar":
        dk = model.youngs[i] / model.lengths[i]
        dm = 0.5 * model.density[i] * model.lengths[i]
        return np.array([[dm]]), np.array([[dk]])
    if model.kind == "shear_frame":
        dk = np.zeros(model.n_elements)
        dk[i] = (model.columns_per_story * 3.0 * model.youngs[i]
                 * np.pi * x[i] ** 3 / 16.0 / model.lengths[i] ** 3)
        return np.zeros((model.ndof, model.ndof)), _shear_stiffness(dk)
    sizes = model.linking.element_sizes(x)
    members = set(model.linking.elements_of(i).tolist())
    dstiff, dmass = [], []
    for e in range(model.n_elements):
        if e not in members:
            dstiff.append(None)
            dmass.append(None)
            continue
        d = sizes[e]
        dstiff.append(_beam_stiffness_diameter_derivative(model.youngs[e], d, model.lengths[e]))
        dmass.append(beam_local_mass(model.density[e], np.pi * d / 2.0, model.lengths[e]))
    return _truss_scatter(model, dmass), _truss_scatter(model, dstiff)


def _check_stiffness(stiffness, x):
    try:
        linalg.cholesky(stiffness, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularStiffnessError(
            f"stiffness is not positive definite at x={np.asarray(x).tolist()}", design=x
        ) from exc


def assemble(model, x):
    """Assemble ``M(x)``, ``C(x)`` and ``K(x)`` on the free DOFs.

    ``x`` may be a :class:`DesignVector` (bounds are then enforced) or a
    plain array of positive design values.
    """
    values = _design_array(model, x)
    mass, stiffness = _raw_matrices(model, values)
    _check_stiffness(stiffness, values)
    spec = model.damping
    if spec.kind == "none":
        damping = np.zeros_like(stiffness)
    elif spec.kind == "constant":
        damping = np.full_like(stiffness, 0.0)
        np.fill_diagonal(damping, spec.value)
    else:
        damping = rayleigh_damping(mass, stiffness, spec.value).matrix
    return SystemMatrices(mass=mass, damping=damping, stiffness=stiffness)


def assemble_sensitivity(model, x, i, matrices=None):
    """Exact derivatives of the system matrices with respect to ``x[i]``.

    ``matrices`` may pass the already assembled system at ``x`` so that
    Rayleigh damping does not repeat the eigen-solve.
    """
    values = _design_array(model, x)
    if not 0 <= i < model.n_variables:
        raise IndexError(f"variable index {i} out of range [0, {model.n_variables})")
    dmass, dstiffness = _raw_derivatives(model, values, i)
    spec = model.damping
    if spec.kind == "rayleigh":
        mass, stiffness = (
            (matrices.mass, matrices.stiffness) if matrices is not None
            else _raw_matrices(model, values)
        )
        ray = rayleigh_damping(mass, stiffness, spec.value)
        ddamping = rayleigh_coefficient_sensitivity(
            mass, stiffness, dmass, dstiffness, ray.omega, ray.modes, spec.value,
            ray.alpha_m, ray.alpha_k,
        ).ddamping
    else:
        ddamping = np.zeros_like(dstiffness)
    return MatrixSensitivity(dmass=dmass, ddamping=ddamping, dstiffness=dstiffness,
                             variable_index=i)


def assemble_all_sensitivities(model, x, matrices=None):
    """Stacked derivatives ``(dM, dC, dK)``, each of shape ``(n, ndof, ndof)``."""
    sens = [assemble_sensitivity(model, x, i, matrices) for i in range(model.n_variables)]
    return (np.stack([s.dmass for s in sens]),
            np.stack([s.ddamping for s in sens]),
            np.stack([s.dstiffness for s in sens]))


def volume(model, x):
    """Material volume and its gradient with respect to the design variables."""
    values = _design_array(model, x)
    if model.kind == "two_bar":
        return float(values @ model.lengths), model.lengths.copy()
    if model.kind == "shear_frame":
        coef = model.columns_per_story * model.lengths * np.pi / 4.0
        return float(np.sum(coef * values**2)), 2.0 * coef * values
    sizes = model.linking.element_sizes(values)
    value = float(np.sum(model.lengths * np.pi * sizes**2 / 4.0))
    grad = model.linking.matrix.T @ (model.lengths * np.pi * sizes / 2.0)
    return value, grad


def element_geometry(model):
    """Undeformed lengths and direction cosines of the truss elements."""
    coords = model.nodes
    d = coords[model.elements[:, 1]] - coords[model.elements[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    return lengths, d / lengths[:, None]
