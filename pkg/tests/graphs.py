"""Hand-built layers and graphs for selection and feature tests."""

import numpy as np

from tuef.mlg import ExpertLabeling, Layer, MultiLayerGraph, UserActivity
from tuef.topics import TagClustering


def make_layer(nodes, weights, answers=None, lid=0):
    n = len(nodes)
    answers = answers or {u: 10 for u in nodes}
    layer = Layer(lid, ("t",), tuple(nodes), 1, np.ones((n, 1)), np.asarray(weights, dtype=float),
                  {u: 1 for u in nodes}, dict(answers))
    layer.compute_stats()
    return layer


def make_graph(layers, experts, ratios=None):
    experts = frozenset(experts)
    ratios = ratios or {}
    users = {u for layer in layers for u in layer.nodes}
    answers = {u: 100 for u in users}
    accepted = {u: int(round(100 * ratios.get(u, 0.5))) for u in users}
    act = UserActivity(answers, accepted, {})
    lab = ExpertLabeling(frozenset(users), experts, 1, 0.5, {}, 95.0)
    clust = TagClustering(len(layers), {f"L{i}": i for i in range(len(layers))}, np.zeros((len(layers), 1)), 0.0)
    return MultiLayerGraph(list(layers), lab, clust, act)
