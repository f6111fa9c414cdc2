"""Story plot search: MCTS over plot continuations with a learned step value model.

Subpackages:

- ``tree``      story state, edge statistics, and the search tree container
- ``backends``  OpenAI-compatible HTTP clients plus deterministic mock backends
- ``engine``    the search loop (selection, expansion, simulation, backprop)
- ``value``     surprisal features, the calibrated classifier, cross-validation
- ``mining``    turning visit statistics into preference pairs
- ``analytics`` scaling fits, rubric-based rating, effect sizes
- ``kernels``   compiled/numpy numeric kernels shared by the above
"""

__version__ = "0.1.0"
