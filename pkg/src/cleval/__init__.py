"""cleval: a two-phase benchmark harness for class-incremental learning.

Hyperparameters are searched by uniform random sampling on one dataset
(tuning phase), the best assignment is picked by the harmonic mean of
final and average incremental accuracy, and that assignment is applied
unchanged to a class-disjoint dataset (evaluation phase) whose score is
the algorithm's result.
"""

__version__ = "0.1.0"
