"""Latent factor analysis with gradient pre-training and swarm refinement."""
