"""Tensor-size budgeting.

Dense kernels grow like (n^d)^(2k) and wavefunctions like n^(N*d); every
operation that allocates one checks against a cap first so that an oversized
request fails loudly instead of thrashing the machine.  The element cap can be
overridden with the HLAB_BUDGET environment variable (an integer element
count).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_MAX_ELEMENTS = 2**24
DEFAULT_MAX_EIG_ROWS = 4096


class BudgetExceeded(RuntimeError):
    """Requested dense tensor or eigensolve is over the configured cap."""


@dataclass(frozen=True)
class TensorBudget:
    max_elements: int = DEFAULT_MAX_ELEMENTS
    max_eig_rows: int = DEFAULT_MAX_EIG_ROWS

    def check_elements(self, count: int, what: str) -> None:
        if count > self.max_elements:
            raise BudgetExceeded(
                f"{what} needs {count} complex entries, cap is {self.max_elements} "
                f"(set HLAB_BUDGET to raise it)"
            )

    def check_eig_rows(self, rows: int, what: str) -> None:
        if rows > self.max_eig_rows:
            raise BudgetExceeded(
                f"{what} needs a dense eigensolve with {rows} rows, cap is {self.max_eig_rows}"
            )


def default_budget() -> TensorBudget:
    raw = os.environ.get("HLAB_BUDGET")
    if raw:
        return TensorBudget(max_elements=int(raw))
    return TensorBudget()
