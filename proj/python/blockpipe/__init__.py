"""Python bindings for the block-wise denoising pipeline simulator."""

try:
    from ._blockpipe import *  # noqa: F401,F403
except ImportError:  # extension built in-tree, outside the package
    from _blockpipe import *  # noqa: F401,F403
