"""Nonlinear valuation of collateralized, default-risky, funding-inclusive deals."""
