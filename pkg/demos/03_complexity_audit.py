"""
Counting parameters and multiply-accumulates
============================================

The audit builds each ablation topology on PyTorch's meta device, so nothing is
allocated and no arithmetic runs, and tallies MACs for one second of input.
"""

from dbtnet.complexity import audit, format_audit, ordering_violations

rows = audit()
print(format_audit(rows, param_tol=0.10, mac_tol=0.20))

# MAC totals track the reference closely for the dual-branch models. Parameter
# totals come out about 1.5x higher: the reference column cannot be reproduced by
# any topology in which the dual model is two single-branch models plus gates.
bad = ordering_violations(rows, "params")
print("\nparameter-ordering violations:", bad or "none")
