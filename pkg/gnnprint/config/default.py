"""
Default experiment configuration, every key can be overwritten by a config file.

Comments give the meaning of each key, see docs/source/docs/config.md.
"""

DEFAULT_CONFIG = dict(
    # master seed, --seed of the CLI takes precedence
    seed=0,
    # worker threads for model training and scoring
    jobs=1,
    dataset=dict(
        num_graphs=100,
        nodes_per_graph=10,
        feature_dim=16,
        edge_model=dict(name="erdos_renyi", p=0.3),
        feature_model=dict(name="normal"),
        # extraction queries and fingerprint graphs are fresh draws
        num_query_graphs=200,
        num_fingerprint_graphs=100,
    ),
    model=dict(hidden_dim=16),
    victim=dict(arch="gcn", dim=8, split=0),
    # training of the victim and the independents on the node task
    train=dict(epochs=200, learning_rate=0.05, momentum=0.9, num_classes=4),
    zoo=dict(
        surrogates=dict(count=5, archs=["gcn", "gin", "sage"], dims=[8, 16]),
        independents=dict(count=10, archs=["gcn", "gin", "sage"], splits=[0, 1]),
        extract=dict(epochs=200, learning_rate=0.05, momentum=0.9),
        finetune=dict(learning_rate=0.01, momentum=0.9, num_graphs=20, num_classes=4),
        holdout_fraction=0.2,
    ),
    fingerprint=dict(
        num_points=40,
        lam=0.01,
        delta=0.01,
        budget=2000,
        khop=2,
        acceptance=0.02,
        optimizer="auto",
    ),
    score=dict(form="percentile"),
    conditions=dict(
        transforms=[],
        prune_fractions=[],
        finetune_epochs=[],
        points=[],
        lambdas=[],
    ),
)
