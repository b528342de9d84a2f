"""
Core inference package for the ADVI engine.
Holds the autodiff tape, constraint transforms, log densities, the Gaussian
variational families and the stochastic optimizer.
"""
