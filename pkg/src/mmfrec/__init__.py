"""Multi-matrix factorization for attribute-interpretable collaborative filtering."""
