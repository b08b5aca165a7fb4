"""
Discrete information measures on named probability tables
==========================================================

The package's base currency is a dense joint pmf with named axes.  This
script walks through the core measures used everywhere else: entropy,
conditional mutual information, Markov-chain residuals, and i.i.d.
block extensions.
"""

import numpy as np

from skregion import (
    Channel,
    JointPmf,
    VariableId,
    cond_mutual_information,
    iid_extension,
    is_markov_chain,
)
from skregion.sources import broadcast_source, xor_source

# A joint over three binary sources: a uniform center bit X3 observed by
# users 1 and 2 through independent BSC(0.25) legs.
star = broadcast_source("X3", 0.25, 0.25)
print("joint:", star)
print("H(X1,X2,X3) =", round(star.entropy(), 6), "bits")
print("H(X1)       =", star.entropy({"X1"}))

# The conditional MI that drives the explicit outer bound of the key region:
v = cond_mutual_information(star, ("X1",), ("X3",), ("X2",))
print("I(X1;X3|X2) =", round(v, 6), " (the famous 0.143156)")

# Chain diagnostics: the star with center X3 is the chain X1 - X3 - X2.
print("X1-X3-X2 chain:", is_markov_chain(star, ("X1",), ("X3",), ("X2",)))
print("X1-X2-X3 chain:", is_markov_chain(star, ("X1",), ("X2",), ("X3",)))

# The xor triple is the canonical non-chain: every pair is independent but
# any two determine the third.
xor = xor_source()
print("xor I(X1;X3) =", cond_mutual_information(xor, ("X1",), ("X3",)))
print("xor I(X1;X3|X2) =", cond_mutual_information(xor, ("X1",), ("X3",), ("X2",)))

# Channels extend a joint with new variables; marginals are preserved.
bit = JointPmf((VariableId("X", 2),), np.array([0.5, 0.5]))
noisy = bit.extend(Channel.bsc("X", "Y", 0.1))
print("after BSC(0.1): I(X;Y) =", round(cond_mutual_information(noisy, ("X",), ("Y",)), 6))

# Block extensions tensorize exactly: entropies scale by n.
ext = iid_extension(star, 3)
print("H over 3 i.i.d. copies =", round(ext.entropy(), 6),
      "= 3 *", round(star.entropy(), 6))
