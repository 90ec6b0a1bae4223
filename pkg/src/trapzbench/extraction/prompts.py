"""Prompt texts sent to the vision model."""

ENTITY_PROMPT = """\
[tasks]
This image is a receipt.
A. Extract Vendor, Date, List items, Subtotal, Tax, Total, Payment and Change of the image.

[conditions]
A. Exclude items with no price or zero price.
B. The price of the item is for the entire quantity.
C. Be sure to include the quantity of the item.
D. Total is the sum of Subtotal and tax.
E. Vendor is case sensitive.

[schema]
{
  "type": "object",
  "properties": {
    "Vendor": {
      "type": "string",
      "description": "Vendor"
    },
    "Date": {
      "type": "string",
      "description": "Date"
    },
    "List items": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "Item": {
            "type": "string",
            "description": "Item Name"
          },
          "Quantity": {
            "type": "number",
            "description": "number of Item"
          },
          "Price": {
            "type": "number",
            "description": "Item price"
          }
        }
      }
    },
    "Subtotal": {
      "type": "number",
      "description": "sum of List items"
    },
    "Tax": {
      "type": "number",
      "description": "subtotal tax"
    },
    "Total": {
      "type": "number",
      "description": "total price"
    },
    "Payment": {
      "type": "number",
      "description": "payment"
    },
    "Change": {
      "type": "number",
      "description": "change"
    }
  }
}

[format instruction]
Date Format: YYYY-mm-dd
Output in English.
Use json not markdown.
"""

FULLTEXT_PROMPT = """\
[tasks]
This image is a receipt.
A. Extract all text of the image.

[format instruction]
Use plain text.
"""
