"""Compile photonic graph states into emitter gate sequences.

A target graph of photons is reduced to the empty graph by a sequence of
graph-rewrite operations. Reversing that log yields a forward generation
sequence for quantum emitters and emitted photons. Operations are chosen by
a DQN-trained graph-isomorphism Q-network, or by one of the baselines.

Example run config (see photonseq.config)::

    [hardware]
    t_cz_ns = 10

    [hyperparameters]
    episodes = 300
    alpha = 0.5

    [graph small-path]
    kind = path
    n = 10
"""

version_tuple = (0, 1, 0)
version = version_string = __version__ = "%d.%d.%d" % version_tuple
