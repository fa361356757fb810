"""Sheaves on finite graded posets: cochain complexes, Hodge theory, heat
diffusion, separation experiments and neural sheaf diffusion."""

from .poset import (
    Chain,
    Poset,
    SimplicialComplex,
    build_poset,
    grade,
    graph_poset,
    hypergraph_poset,
    incidence_number,
    order_complex,
    simplicial_from_facets,
)
from .sheaf import (
    Sheaf,
    class_sum_sheaf,
    constant_sheaf,
    direct_sum,
    gradient_space_sheaf,
    lying_sheaf,
    random_bundle,
    scalar_sheaf,
    selector_sheaf,
    symmetric_weight_sheaf,
    validate_sheaf,
)
from .complexes import (
    CochainComplex,
    cellular_complex,
    dirichlet_energy,
    duta_laplacian,
    laplacian,
    roos_complex,
    vector_calculus,
)
from .spectral import (
    betti,
    eig_sym,
    global_sections,
    harmonic_projector,
    heat_flow,
    hodge_decompose,
    hole_attribution,
)

from .io import SCHEMA_VERSION
__version__ = "0.1.0"
