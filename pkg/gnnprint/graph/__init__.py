# flake8: noqa
from gnnprint.graph.dataset import (
    DatasetSpec,
    generate_dataset,
    khop_dataset,
    load_dataset,
    make_node_labels,
    save_dataset,
)
from gnnprint.graph.graph import (
    Graph,
    batch_graphs,
    khop_subgraph,
    perturb_node,
)
