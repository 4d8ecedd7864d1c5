"""Counterfactual explanations for dense classifiers.

The engine perturbs a minimal subset of input features, chosen by gradient
magnitude, until the classifier assigns a requested target class. Submodules:

- ``net``: the classifier, its gradients, Adam, persistence
- ``data``: CSV / IDX loading, normalization, synthetic datasets, reference logits
- ``construction``: the mask-then-compose explanation loop
- ``baselines``: comparison objectives sharing the same scaffold
- ``metrics``: sparsity / proximity / coherence / logit-distribution metrics
- ``cli``: command-line entry points
"""

__version__ = "0.1.0"
