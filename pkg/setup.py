##################################################################
# Copyright 2026 py-umc authors                                  #
# licensed under MPL 2.0, Please consult LICENSE.txt for details #
##################################################################

import os
from setuptools import setup, find_namespace_packages


def parse_requirements( filename ):
    with open( filename ) as fp:
        return list(filter(None, (r.strip('\n ').partition('#')[0] for r in fp.readlines())))

def get_version():
    with open('VERSION') as fp:
        return fp.read().strip()

kwargs = {}
VERSION = get_version()
DESCRIPTION = ('Py-UMC is a calibration-driven compression toolkit for a toy unified '
               'multimodal model: depth, width and head pruning, activation analysis '
               'and dense to mixture-of-experts conversion.')
KEYWORDS = 'pruning mixture-of-experts compression multimodal'
INSTALL_REQUIRES = parse_requirements('requirements.txt')

with open('README.md') as f:
    content_readme = f.read()


setup(
    name='py-umc',
    version=VERSION,
    description=DESCRIPTION,
    keywords=KEYWORDS,
    author='py-umc authors',
    long_description=content_readme,
    long_description_content_type="text/markdown",
    python_requires=">=3.9",
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Mozilla Public License 2.0 (MPL 2.0)',
        'Operating System :: POSIX :: Linux',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Artificial Intelligence'
    ],
    install_requires=INSTALL_REQUIRES,
    packages=find_namespace_packages(include=['pyumc','pyumc.*']),
    include_package_data = True,
    package_data={
        'pyumc': ['build.manifest', 'config.yml'],
        'pyumc.resources': ['schemas/*.json'],
    },
    entry_points={
        'console_scripts': [
            'umc = pyumc.cli:main',
        ],
    },

    **kwargs
)
