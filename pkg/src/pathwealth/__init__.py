"""Self-financing wealth of path-dependent allocation strategies on
positive càdlàg price paths, wealth-weighted aggregation, and the universal
portfolio over the convex hull of a strategy family."""

from .aggregation import (
    laissez_faire,
    minimax_weights,
    run_aggregate,
    tracking_report,
    verify_mixture,
)
from .errors import *  # noqa: F401,F403
from .paths import (
    CadlagPath,
    Grid,
    OmegaConstraint,
    Partition,
    RefinementLadder,
    check_omega,
    default_ladder,
    discretize,
    dyadic_ladder,
    ingest_csv,
    piecewise_approx,
    quadratic_variation,
    stop,
    stop_left,
)
from .scenarios import generate
from .strategies import (
    best_final_vs_time_average,
    evaluate,
    from_spec,
    make_cash,
    make_convex_combination,
    make_exponential_average,
    make_market_index,
    make_portfolio_of_portfolio,
    make_simple_average,
    make_single_stock,
    make_softmax,
)
from .universal import (
    asymptotics_experiment,
    exact_ratio_check,
    gaussian_ratio,
    gram,
    log_wealth_of_b,
    maximize_b,
    universal_portfolio,
)
from .wealth import (
    closed_form_wealth,
    implementation,
    ito_decomposition,
    verify_self_financing,
    wealth_discrete,
    wealth_limit,
)

__version__ = "0.1.0"
