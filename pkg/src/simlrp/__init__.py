"""Second-order relevance propagation for dot-product similarity models."""

from .lrp import ZB, GammaSchedule, lrp_explain
from .network import NetworkGraph, SimilarityModel, forward, load_model, save_model, similarity
from .pairwise import (PairwiseExplanation, Partition, acs, bilrp, bilrp_direct, coarse_grain,
                       curvature, hessian_product, saliency)

__version__ = "0.1.0"
