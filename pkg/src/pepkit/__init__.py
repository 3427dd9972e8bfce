"""Parameter ensembling by perturbation for small softmax classifiers.

Train a dense classifier, perturb its trained weights with isotropic noise,
average the perturbed predictions, and pick the noise scale that maximizes
validation log-likelihood. Curvature probes relate the resulting gain to the
Laplacian of the log-likelihood and the empirical Fisher trace.
"""

__version__ = "0.1.0"
