from setuptools import setup

setup(
    name="free_obata",
    version="1.0",
    description="Exact verification engine for free difference quotients and free Obata rigidity",
    url="",
    author="",
    author_email="",
    license="BSD-3",
    packages=["free_obata"],
    install_requires=["attrs", "jsonschema", "numpy", "pyyaml", "scipy", "toml"],
    entry_points={"console_scripts": ["free-obata = free_obata.__main__:main"]},
    zip_safe=False,
)
