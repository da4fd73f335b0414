# coding: utf-8

# # Edges from label volumes
#
# Tumour labels live on a voxel grid with values 0 (background), 1 (NCR/NET),
# 2 (edema) and 4 (enhancing tumour). An edge voxel is a labelled voxel that
# touches a different label somewhere in its 26-neighbourhood.

# In[1]:

import numpy as np

from edgeseg.edges import cancellation_voxels, extract_edges, laplacian26_response, oracle_boundary
from edgeseg.volgrid import LabelVolume


# A single enhancing voxel in the middle of a 3x3x3 block. The 26/-1 filter
# gives 26*4 = 104 at the centre and -4 on every neighbour.

# In[2]:

v = np.zeros((3, 3, 3), np.uint8)
v[1, 1, 1] = 4
t = laplacian26_response(LabelVolume(v))
print(t[1, 1, 1], t[0, 0, 0])


# Now a cube of edema with an NCR core. The filter marks the shell of each
# region, and the reconstructed edge map keeps the original label there.

# In[3]:

cube = np.zeros((9, 9, 9), np.uint8)
cube[1:8, 1:8, 1:8] = 2
cube[3:6, 3:6, 3:6] = 1
labels = LabelVolume(cube)
edges = extract_edges(labels)
print("edge voxels per label:", {k: int((edges.data == k).sum()) for k in (1, 2)})
print(edges.data[:, :, 4])


# The filter is linear, so it can be fooled: if the neighbours happen to sum
# to 26 times the centre, the response is 0 even though the voxel sits on a
# boundary. Half the neighbours at 2 and half at 0 around a centre of 1 does it.

# In[4]:

block = np.zeros((5, 5, 5), np.uint8)
offsets = [o for o in np.ndindex(3, 3, 3) if o != (1, 1, 1)]
for dx, dy, dz in offsets[:13]:
    block[1 + dx, 1 + dy, 1 + dz] = 2
block[2, 2, 2] = 1
lab = LabelVolume(block)
print("filter response at centre:", laplacian26_response(lab)[2, 2, 2])
print("exact boundary says:", oracle_boundary(lab).data[2, 2, 2])
print("filter edge map says:", extract_edges(lab).data[2, 2, 2])


# On random volumes the filter edges are always a subset of the exact
# boundary, and every miss is one of these cancellations.

# In[5]:

rng = np.random.default_rng(0)
vol = LabelVolume(rng.choice(np.array([0, 1, 2, 4], np.uint8), size=(16, 16, 16)))
e, o = extract_edges(vol).data, oracle_boundary(vol).data
missed = (o != 0) & (e == 0)
print("subset:", bool(np.all((e == 0) | (e == o))))
print("missed:", int(missed.sum()), "all cancellations:", bool(np.all(cancellation_voxels(vol)[missed])))
