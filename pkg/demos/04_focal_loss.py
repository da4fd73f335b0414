# coding: utf-8

# # Focal loss and its gradient

# In[1]:

import numpy as np

from edgeseg.focal import ClassWeights, focal_grad_logits, focal_term, focal_total, softmax


# The focal term shrinks the loss of easy examples. Compare plain weighted
# cross entropy (gamma = 0) with gamma = 2 for a positive voxel.

# In[2]:

p = np.array([0.1, 0.5, 0.9, 0.99])
print("gamma 0:", focal_term(1, p, 0.8, 0.0))
print("gamma 2:", focal_term(1, p, 0.8, 2.0))


# Default weights: background 0.2, regions 0.8, edges 0.9.

# In[3]:

print(ClassWeights.defaults(4))
print(ClassWeights.defaults(7))


# The analytic gradient with respect to the logits agrees with central
# differences.

# In[4]:

rng = np.random.default_rng(1)
w = ClassWeights.defaults(7)
y = np.eye(7)[rng.integers(0, 7, 5)]
z = rng.normal(0, 2, (5, 7))
g = focal_grad_logits(y, z, w)
h = 1e-6
fd = np.zeros_like(z)
for k in range(7):
    dz = np.zeros(7)
    dz[k] = h
    up = focal_term(y, softmax(z + dz), np.array(w.alpha)).sum(axis=1)
    down = focal_term(y, softmax(z - dz), np.array(w.alpha)).sum(axis=1)
    fd[:, k] = (up - down) / (2 * h)
print("max abs difference:", np.abs(g - fd).max())


# Shifting all logits of a row changes nothing, so each gradient row sums to 0.

# In[5]:

print(g.sum(axis=1))
print("mean loss:", focal_total(y, softmax(z), w))
