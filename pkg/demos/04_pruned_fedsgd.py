"""Train the shallow 60-neuron network under each allocation policy.

By default uses the built-in Gaussian blobs.  Pass four IDX files
(train images, train labels, test images, test labels) to train on
MNIST-format data instead:

    python demos/04_pruned_fedsgd.py train-images.gz train-labels.gz t10k-images t10k-labels
"""

import sys

from prunefl.harness.config import parse_config
from prunefl.harness.train import run_fl

fl = {"rounds": 150, "eta": 0.1, "seeds": 3,
      "policies": ["ideal", "fpr(0)", "proposed", "fpr(0.35)", "fpr(0.7)"]}
if len(sys.argv) == 5:
    fl.update(zip(["train_images", "train_labels", "test_images", "test_labels"], sys.argv[1:]))

cfg = parse_config({"fl": fl, "output": {"directory": "demo_results"}})
summaries, traces = run_fl(cfg)

print("policy       accuracy   (std)    mean rho   mean q")
for s in summaries:
    print(f"{s.policy:<11} {s.mean_accuracy_final:8.4f}  ({s.std_accuracy_final:.4f})  "
          f"{s.mean_rho:8.3f}   {s.mean_packet_error:.2e}")

# the per-round curves are in demo_results/train_trace.csv; a quick look at one run
t = traces[0]
print(f"\n{t.policy}, seed {t.seed}: accuracy every 25 rounds",
      [round(a, 3) for a in t.test_accuracy[::25]])
