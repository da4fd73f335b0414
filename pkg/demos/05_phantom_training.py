# coding: utf-8

# # Training the toy classifier through the command line
#
# This runs the whole pipeline on a small cohort: generate phantoms,
# normalise, build targets, train both encodings, predict, score.
# The sizes here are small so it finishes in well under a minute.

# In[1]:

import os
import tempfile

from edgeseg.cli import run

work = tempfile.mkdtemp(prefix="edgeseg_demo_")
cohort = os.path.join(work, "cohort")


def edgeseg(*args):
    code = run([str(a) for a in args])
    assert code == 0, (args, code)


# In[2]:

edgeseg("phantom", "--count", 5, "--seed", 7, "--size", 32, "--out-dir", cohort)
cases = sorted(os.listdir(cohort))
for name in cases:
    d = os.path.join(cohort, name)
    for m in ("flair", "t1ce", "t2"):
        edgeseg("normalize", "--in", f"{d}/{m}.nii", "--out", f"{d}/{m}_norm.nii")
    edgeseg("edges", "--labels", f"{d}/seg.nii", "--out", f"{d}/edges.nii")
    edgeseg("onehot", "--labels", f"{d}/seg.nii", "--out", f"{d}/onehot4.nii")
    edgeseg("onehot", "--labels", f"{d}/seg.nii", "--edges", f"{d}/edges.nii", "--out", f"{d}/onehot7.nii")
print(cases)


# Train with 20 epochs instead of the default 50 to keep this quick.

# In[3]:

for c in (4, 7):
    out = os.path.join(work, f"run{c}")
    os.makedirs(out)
    edgeseg("train", "--data-dir", cohort, "--classes", c, "--epochs", 20,
            "--model-out", f"{out}/model.txt", "--trace-out", f"{out}/trace.txt")
    with open(f"{out}/trace.txt") as f:
        trace = [float(v) for v in f]
    print(c, "classes, loss first/last epoch: %.4f / %.4f" % (trace[0], trace[-1]))


# Predict, evaluate and summarise. phantom_000 has no enhancing tumour in its
# labels, so its ET row is penalised whenever the model still finds some.

# In[4]:

for c in (4, 7):
    out = os.path.join(work, f"run{c}")
    for name in cases:
        edgeseg("predict", "--model", f"{out}/model.txt", "--case-dir", f"{cohort}/{name}",
                "--pred-out", f"{out}/{name}.nii")
        edgeseg("evaluate", "--pred", f"{out}/{name}.nii", "--gt", f"{cohort}/{name}/seg.nii",
                "--subject", name, "--csv", f"{out}/metrics.csv")
    for stat in ("mean", "median"):
        edgeseg("aggregate", "--csv", f"{out}/metrics.csv", "--stat", stat, "--out", f"{out}/{stat}.csv")
        print(open(f"{out}/{stat}.csv").read())


# Activation maps and an edge overlay for one case.

# In[5]:

imgs = os.path.join(work, "images")
os.makedirs(imgs)
edgeseg("predict", "--model", f"{work}/run7/model.txt", "--case-dir", f"{cohort}/{cases[1]}",
        "--pred-out", f"{imgs}/pred.nii", "--activations-dir", imgs,
        "--edge-overlay", 16, f"{imgs}/overlay.ppm")
print(sorted(os.listdir(imgs)))
print("outputs in", work)
