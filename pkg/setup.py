from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the compiled kernel bit-identical to the pure
# Python backend (no fused multiply-adds).
setup(
    ext_modules=cythonize(
        [
            Extension(
                "cbjump.simulate._kernel",
                ["src/cbjump/simulate/_kernel.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
)
