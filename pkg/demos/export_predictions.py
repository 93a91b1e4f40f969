# Command-line round trip: write a dataset, train, evaluate and export
# plot-ready predictions, all through the ``mixgraph`` entry point.

import json
import tempfile
from pathlib import Path

import jsonschema

from mixgraph.cli import PREDICTION_SCHEMA, main
from mixgraph.data import synthetic_scene, write_scene_file

work = Path(tempfile.mkdtemp(prefix="mixgraph-demo-"))
data = work / "data"
data.mkdir()
write_scene_file(synthetic_scene(n_frames=24), data / "scene.txt")

ckpt = work / "model.json"
assert main(["train", "--data", str(data), "--out", str(ckpt), "--epochs", "300", "--batch", "5", "--lr", "0.1", "--lr-late", "0.02", "--lr-switch-epoch", "200"]) == 0
assert main(["eval", "--data", str(data), "--checkpoint", str(ckpt), "--k", "20"]) == 0

# Each exported window holds the observed track, the true future, K sampled
# futures and the per-step Gaussian parameters, indexed by agent first.

out = work / "predictions.json"
assert main(["predict", "--data", str(data), "--checkpoint", str(ckpt), "--k", "5", "--out", str(out)]) == 0
doc = json.loads(out.read_text())
jsonschema.validate(doc, PREDICTION_SCHEMA)

first = doc["windows"][0]
print("windows exported:", len(doc["windows"]))
print("agents:", first["agent_ids"], first["classes"])
print("agent 0 last observed:", first["observed"][0][-1])
print("agent 0 true final:   ", first["ground_truth"][0][-1])
print("agent 0 sample finals:", [s[0][-1] for s in first["samples"]])
print("outputs in", work)
