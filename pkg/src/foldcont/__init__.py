"""foldcont: find many solutions of F(u) = g by steering continuation
lines through the critical set and spawning branches at folds."""

from .bank import SolutionBank, SolutionRecord, read_bank_csv, write_bank_csv
from .continuation import (
    BifurcationDiagram,
    Branch,
    ContinuationConfig,
    DomainLine,
    build_diagram,
    continue_path,
    detect_crossings,
    morse_count,
    spawn_at_fold,
    write_diagram_csv,
)
from .elliptic import (
    AnnulusGrid,
    ArctanNonlinearity,
    build_annulus,
    elliptic_map,
    solimini_experiment,
    vertical_crossing_count,
)
from .errors import (
    ConfigError,
    EmptyDomain,
    FoldcontError,
    NoConvergence,
    NoProgress,
    NotSymmetric,
    OnCriticalBoundary,
    SingularMatrix,
    TransversalityFailure,
)
from .folds import (
    FoldFrame,
    ImagePath,
    fold_tangent,
    fold_test,
    halfline_path,
    image_of_line,
    regular_tangent,
    segment_path,
    track_eigenpair,
)
from .linalg import (
    EigenPair,
    det_sign,
    lu_solve,
    rank_one_solve,
    smallest_magnitude_eigenpair,
    sym_eigen,
)
from .maps import (
    Box,
    NonlinearMap,
    Polyline,
    multistart_preimages,
    newton_polish,
    pleat_map,
    quad_map,
    semilinear_map,
    trace_critical_contour,
    zcubic_map,
)
from .sturm import (
    PLParams,
    SLDiscretization,
    build_discretization,
    lazer_mckenna_pair,
    morse_index,
    orthant_matrix,
    orthant_oracle,
    pl_bifurcation_diagram,
    pl_eval,
    random_orthant_sampling,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
