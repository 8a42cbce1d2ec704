"""Incentivized trust-game experiments against completion APIs."""

from .classifier import ChoiceLabel, classify, classify_batch
from .paramspace import build_grid, cents_to_tokens, default_grid
from .protocol import Condition, Incentive, Task, Wave, build_session, render_prompt
from .stats import analyze, chi2_sf_df1, fit_logistic, prop_test_2x2, tabulate

__version__ = "0.1.0"

__all__ = [
    "ChoiceLabel",
    "Condition",
    "Incentive",
    "Task",
    "Wave",
    "analyze",
    "build_grid",
    "build_session",
    "cents_to_tokens",
    "chi2_sf_df1",
    "classify",
    "classify_batch",
    "default_grid",
    "fit_logistic",
    "prop_test_2x2",
    "render_prompt",
    "tabulate",
]
