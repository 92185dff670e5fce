"""Linear-programming reward learning from demonstrations and pairwise feedback."""
