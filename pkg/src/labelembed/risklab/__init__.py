"""Exact risk computations and executable checks of the transfer bounds."""

from labelembed.risklab.distributions import (
    MultilabelSyntheticDistribution, SyntheticDistribution, massart_distribution,
    random_distribution, random_multilabel_distribution,
)
from labelembed.risklab.risk import (
    bayes_optimal_model, bayes_risk_01, conditional_excess_01,
    conditional_excess_sq, conditional_sq_risk, d_multilabel, d_noise,
    d_noise_all, excess_01_risk, excess_sq_risk, hamming_excess_risk,
    hamming_loss, multilabel_bayes_model, multilabel_conditional_risks,
)
from labelembed.risklab.bounds import (
    RiskReport, massart_corollary_bound, radius_grid, theorem1_bound,
    theorem2_bound, theorem2_parameter,
)
from labelembed.risklab.lemmas import LemmaReport, lemma_oracles, multilabel_lemma_oracles
from labelembed.risklab.campaign import (
    CampaignResult, acquire_matrix, lemma_campaign, massart_campaign,
    theorem1_campaign, theorem2_campaign,
)

__all__ = [
    "MultilabelSyntheticDistribution", "SyntheticDistribution",
    "massart_distribution", "random_distribution",
    "random_multilabel_distribution", "bayes_optimal_model", "bayes_risk_01",
    "conditional_excess_01", "conditional_excess_sq", "conditional_sq_risk",
    "d_multilabel", "d_noise", "d_noise_all", "excess_01_risk",
    "excess_sq_risk", "hamming_excess_risk", "hamming_loss",
    "multilabel_bayes_model", "multilabel_conditional_risks", "RiskReport",
    "massart_corollary_bound", "radius_grid", "theorem1_bound",
    "theorem2_bound", "theorem2_parameter", "CampaignResult", "acquire_matrix",
    "lemma_campaign", "massart_campaign", "theorem1_campaign",
    "theorem2_campaign", "LemmaReport", "lemma_oracles",
    "multilabel_lemma_oracles",
]
