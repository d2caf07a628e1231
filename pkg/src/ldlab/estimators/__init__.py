"""Monte Carlo estimators, window statistics and closed-form bounds."""
