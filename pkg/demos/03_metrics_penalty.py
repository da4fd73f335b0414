# coding: utf-8

# # Dice, HD95 and the empty-region penalty

# In[1]:

import numpy as np

from edgeseg.metrics import directed_distances, evaluate_patient, hd95, percentile
from edgeseg.report import aggregate, summary_csv_text
from edgeseg.volgrid import LabelVolume


# HD95 takes, for each point, the distance to the nearest point of the other
# set, then the 95th percentile of each direction, then the larger of the two.
# One far outlier barely moves it.

# In[2]:

x = np.array([[i, 0, 0] for i in range(20)])
y = x.copy()
y[-1] = [19, 30, 0]
print("nearest distances:", directed_distances(y, x)[-3:])
print("95th percentile:", percentile(directed_distances(y, x), 0.95))
print("hd95:", hd95(x, y))


# Anisotropic voxels are handled through the spacing.

# In[3]:

print(hd95([[0, 0, 0]], [[0, 0, 2]], spacing=(1.0, 1.0, 2.5)))


# When the ground truth has no enhancing tumour but the prediction does, the
# ET row gets dice 0 and a fixed HD95 penalty.

# In[4]:

gt = np.zeros((10, 10, 10), np.uint8)
gt[2:8, 2:8, 2:8] = 2
gt[4:6, 4:6, 4:6] = 1
pred = gt.copy()
pred[5, 5, 5] = 4
for rec in evaluate_patient(LabelVolume(pred), LabelVolume(gt), "case0"):
    print(rec)


# That penalty dominates a mean. The median shrugs it off.

# In[5]:

records = []
for i in range(9):
    records += evaluate_patient(LabelVolume(gt), LabelVolume(gt), f"ok{i}")
records += evaluate_patient(LabelVolume(pred), LabelVolume(gt), "bad")
print(summary_csv_text(aggregate(records, "mean")))
print(summary_csv_text(aggregate(records, "median")))
