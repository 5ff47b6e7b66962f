"""Self-supervised open relation extraction toolkit.

Clusters contextualized entity-pair features with soft-assignment adaptive
clustering, trains a relation classifier on the resulting pseudo-labels to
refine the features, and iterates until the labeling stabilizes.
"""

__version__ = "0.1.0"
