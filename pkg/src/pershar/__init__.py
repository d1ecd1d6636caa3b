"""Subject-similarity personalization for accelerometer activity recognition.

Two learners are weighted by subject similarity: AdaBoost with prior sample
weights (PML) and a 1-D convnet trained only on the m most similar subjects
(PDL). ``experiments`` runs them under subject-independent and hybrid
splits, and ``report`` renders the summary table.
"""

__version__ = "0.1.0"
