# Depth sweep over the number of graph-convolution and extrapolator layers.
#
# Every (n_stgcnn, n_txpcnn) pair from 1 to 5 is trained briefly and scored by
# mADE. The budget is small, so treat the grid as a relative comparison.

import numpy as np

from mixgraph.data import build_windows, synthetic_scene
from mixgraph.evaluator import evaluate, layer_sweep_configs
from mixgraph.network import ModelConfig
from mixgraph.trainer import TrainConfig, train

windows = build_windows(synthetic_scene(n_frames=24))
train_config = TrainConfig(epochs=40, batch_windows=5, lr_initial=0.1, lr_late=0.02, lr_switch_epoch=30)

grid = np.zeros((5, 5))
for (s, t), cfg in layer_sweep_configs(ModelConfig(num_classes=6), 5).items():
    params, _ = train(windows, train_config, cfg)
    grid[s - 1, t - 1] = evaluate(params, cfg, windows, K=20, S=20, seed=0).made

print("mADE, rows = ST-GCNN layers, columns = TXP-CNN layers")
print("      " + " ".join(f"{t:>6d}" for t in range(1, 6)))
for s in range(5):
    print(f"{s + 1:>5d} " + " ".join(f"{v:6.3f}" for v in grid[s]))
best = np.unravel_index(grid.argmin(), grid.shape)
print("best:", (int(best[0]) + 1, int(best[1]) + 1))
