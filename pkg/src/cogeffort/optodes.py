"""Optode layout constants for the 16-channel prefrontal montage.

Optodes are 1-based. The lateral prefrontal cortex (LPFC) is covered by the
outer channels on both sides; the ventromedial prefrontal cortex (VMPFC) by
the central block.
"""

N_OPTODES = 16

LPFC_OPTODES = frozenset({1, 2, 3, 4, 13, 14, 15, 16})
VMPFC_OPTODES = frozenset(range(5, 13))
