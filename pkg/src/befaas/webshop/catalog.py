"""Product catalog fixture: ten products with deterministic ids and prices."""
from __future__ import annotations

import json
from importlib import resources

from .money import Money


def _load() -> list[dict]:
    raw = resources.files("befaas.webshop").joinpath("data/products.json").read_text()
    products = json.loads(raw)
    seen = set()
    for product in products:
        if product["id"] in seen:
            raise ValueError(f"duplicate product id: {product['id']}")
        seen.add(product["id"])
        if Money.from_doc(product["price"]).to_nanos() < 0:
            raise ValueError(f"negative price: {product['id']}")
    return products


PRODUCTS: list[dict] = _load()
_BY_ID = {p["id"]: p for p in PRODUCTS}


def product_ids() -> list[str]:
    return [p["id"] for p in PRODUCTS]


def get(product_id: str) -> dict | None:
    return _BY_ID.get(product_id)


def search(query: str) -> list[dict]:
    needle = query.lower()
    return [
        p
        for p in PRODUCTS
        if needle in p["name"].lower() or needle in p["description"].lower()
    ]
