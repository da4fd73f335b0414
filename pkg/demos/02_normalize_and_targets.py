# coding: utf-8

# # Normalisation and training targets

# In[1]:

import numpy as np

from edgeseg.edges import extract_edges
from edgeseg.normalize import brain_stats, zscore_normalize
from edgeseg.phantom import PhantomSpec, generate_phantom
from edgeseg.targets import argmax_labels, fuse_prediction, onehot_regions, onehot_regions_edges


# A synthetic case: three modalities and a label volume. Outside the brain
# every modality is exactly zero, which is how the brain mask is defined.

# In[2]:

flair, t1ce, t2, labels = generate_phantom(PhantomSpec(seed=3, size=48))
print(flair.dims, brain_stats(flair))


# Z-scoring uses only the nonzero voxels and leaves the background at 0.

# In[3]:

z = zscore_normalize(flair)
brain = flair.data != 0
print("brain mean %.2e  std %.6f" % (z.data[brain].mean(), z.data[brain].std()))
print("background max:", np.abs(z.data[~brain]).max())


# Two target encodings. The 4-channel stack is background plus one channel per
# label. The 7-channel stack splits each label into edge and interior.

# In[4]:

four = onehot_regions(labels)
edges = extract_edges(labels)
seven = onehot_regions_edges(labels, edges)
print(four.channel_names)
print(seven.channel_names)
print("voxels per channel:", seven.data.reshape(-1, 7).sum(axis=0).astype(int))


# Argmax and fusion bring a 7-class prediction back to labels. On the exact
# targets the round trip is lossless.

# In[5]:

back = fuse_prediction(argmax_labels(seven.data), 7)
print("identity:", back == labels)
