"""
TDOA-Homotopy
-------------

Self-calibration of 2D TDOA sensor networks with total-degree homotopy
continuation.
"""
import re
from setuptools import setup

with open('tdoa_homotopy/__init__.py', 'r') as f:
    version = re.search(r'^__version__\s*=\s*[\'"]([^\'"]*)[\'"]',
                        f.read(), re.MULTILINE).group(1)

setup(
    name='TDOA-Homotopy',
    version=version,
    license='MIT',
    author='TDOA-Homotopy developers',
    description='Self-calibration of 2D TDOA networks with homotopy '
                'continuation',
    long_description=__doc__,
    packages=['tdoa_homotopy'],
    zip_safe=False,
    include_package_data=True,
    platforms='any',
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'scipy',
        'click',
    ],
    tests_require=[
        'sympy',
    ],
    test_suite="tests",
    entry_points={
        'console_scripts': [
            'tdoa-homotopy=tdoa_homotopy.cli:main',
        ],
    },
    classifiers=[
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Software Development :: Libraries :: Python Modules'
    ]
)
