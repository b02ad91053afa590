# SPDX-License-Identifier: Apache-2.0
"""Python interface to the ttl toolkit.

The heavy lifting lives in the `_ttl` extension module built from the C++
core; this package re-exports its surface.
"""

try:
    from ttl._ttl import *  # noqa: F401,F403  (installed package layout)
    from ttl._ttl import __doc__ as _doc
except ImportError:  # in-tree builds put the extension on PYTHONPATH directly
    from _ttl import *  # noqa: F401,F403
    from _ttl import __doc__ as _doc

__doc__ = _doc
__version__ = "0.1.0"
