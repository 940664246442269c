"""Estimation of inter-sector asset correlations in a two-sector Vasicek model."""

from .estimators import (
    CrossSectionEstimates,
    DmmDecomposition,
    GammaEstimate,
    MadDiagnostics,
    Method,
    bayes_sign,
    bayes_sign_prob,
    cross_section,
    dmm,
    estimate_all,
    imm,
    imm_bias_corrected,
    intra_normal_variance,
    ken_gamma,
    kendall_tau_b,
    mad_estimator,
    max_estimator,
    spearman_gamma,
    spearman_rho,
)
from .num_kernels import (
    bvn_cdf,
    solve_bvn_correlation,
    std_normal_cdf,
    std_normal_inv_cdf,
    std_normal_pdf,
)
from .vasicek import (
    PairModel,
    Panel,
    PanelRow,
    SectorParams,
    mixing_prob,
    pair_moments,
    read_panel_csv,
    simulate_latent,
    simulate_panel,
    write_panel_csv,
)

__version__ = "0.1.0"
