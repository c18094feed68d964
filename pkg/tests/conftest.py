import hypothesis
import numpy as np

np.seterr(all="warn")

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.load_profile("default")
