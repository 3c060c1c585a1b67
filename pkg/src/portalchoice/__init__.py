"""Household-specific conditional logit regressions of portal choice on clickstream data."""

__version__ = "0.1.0"

COVARIATES = ("loyalty", "last_search_repeated", "ln_last_pages", "missing_data")
BRAND_PREFIX = "brand:"
