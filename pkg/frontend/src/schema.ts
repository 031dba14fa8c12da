/**
 * Minimal JSON Schema (draft-07 subset) interpreter.
 *
 * Covers exactly the keywords the shared session-command schema uses:
 * $ref into #/definitions, oneOf, type, const, enum, required, properties,
 * additionalProperties: false, items, minItems, maxItems, minimum and
 * maxLength.  Unknown keywords raise so a schema extension cannot silently
 * pass unvalidated.
 */

export type SchemaNode = Record<string, unknown>;

const KNOWN_KEYWORDS = new Set([
  "$schema",
  "$ref",
  "title",
  "description",
  "definitions",
  "oneOf",
  "type",
  "const",
  "enum",
  "required",
  "properties",
  "additionalProperties",
  "items",
  "minItems",
  "maxItems",
  "minimum",
  "maxLength",
]);

function resolveRef(root: SchemaNode, ref: string): SchemaNode {
  if (!ref.startsWith("#/")) {
    throw new Error(`unsupported $ref target: ${ref}`);
  }
  let node: unknown = root;
  for (const part of ref.slice(2).split("/")) {
    if (typeof node !== "object" || node === null || !(part in (node as SchemaNode))) {
      throw new Error(`unresolvable $ref: ${ref}`);
    }
    node = (node as SchemaNode)[part];
  }
  return node as SchemaNode;
}

function typeOf(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "array";
  return typeof value;
}

function matchesType(value: unknown, expected: string): boolean {
  switch (expected) {
    case "object":
      return typeof value === "object" && value !== null && !Array.isArray(value);
    case "array":
      return Array.isArray(value);
    case "string":
      return typeof value === "string";
    case "boolean":
      return typeof value === "boolean";
    case "number":
      return typeof value === "number" && Number.isFinite(value);
    case "integer":
      return typeof value === "number" && Number.isInteger(value);
    case "null":
      return value === null;
    default:
      throw new Error(`unsupported type keyword: ${expected}`);
  }
}

function deepEqual(a: unknown, b: unknown): boolean {
  if (a === b) return true;
  if (typeOf(a) !== typeOf(b)) return false;
  if (Array.isArray(a) && Array.isArray(b)) {
    return a.length === b.length && a.every((v, i) => deepEqual(v, b[i]));
  }
  if (typeof a === "object" && a !== null && typeof b === "object" && b !== null) {
    const ka = Object.keys(a as SchemaNode);
    const kb = Object.keys(b as SchemaNode);
    return (
      ka.length === kb.length &&
      ka.every((k) => deepEqual((a as SchemaNode)[k], (b as SchemaNode)[k]))
    );
  }
  return false;
}

function check(root: SchemaNode, schema: SchemaNode, value: unknown, path: string): string[] {
  for (const key of Object.keys(schema)) {
    if (!KNOWN_KEYWORDS.has(key)) {
      throw new Error(`schema keyword not implemented: ${key}`);
    }
  }

  if (typeof schema.$ref === "string") {
    return check(root, resolveRef(root, schema.$ref), value, path);
  }

  const errors: string[] = [];
  const at = path === "" ? "$" : path;

  if (Array.isArray(schema.oneOf)) {
    const failures: string[] = [];
    let matches = 0;
    for (const [i, branch] of (schema.oneOf as SchemaNode[]).entries()) {
      const branchErrors = check(root, branch, value, path);
      if (branchErrors.length === 0) {
        matches += 1;
      } else {
        failures.push(`branch ${i}: ${branchErrors[0]}`);
      }
    }
    if (matches !== 1) {
      errors.push(
        matches === 0
          ? `${at}: no oneOf branch matched (${failures.join("; ")})`
          : `${at}: value matches ${matches} oneOf branches, expected exactly 1`,
      );
    }
  }

  if (typeof schema.type === "string" && !matchesType(value, schema.type)) {
    errors.push(`${at}: expected type ${schema.type}, got ${typeOf(value)}`);
    return errors;
  }

  if ("const" in schema && !deepEqual(value, schema.const)) {
    errors.push(`${at}: expected const ${JSON.stringify(schema.const)}`);
  }

  if (Array.isArray(schema.enum) && !schema.enum.some((v) => deepEqual(value, v))) {
    errors.push(`${at}: value not in enum`);
  }

  if (typeof schema.minimum === "number" && typeof value === "number" && value < schema.minimum) {
    errors.push(`${at}: ${value} is below minimum ${schema.minimum}`);
  }

  if (
    typeof schema.maxLength === "number" &&
    typeof value === "string" &&
    value.length > schema.maxLength
  ) {
    errors.push(`${at}: string longer than ${schema.maxLength}`);
  }

  if (Array.isArray(value)) {
    if (typeof schema.minItems === "number" && value.length < schema.minItems) {
      errors.push(`${at}: fewer than ${schema.minItems} items`);
    }
    if (typeof schema.maxItems === "number" && value.length > schema.maxItems) {
      errors.push(`${at}: more than ${schema.maxItems} items`);
    }
    if (typeof schema.items === "object" && schema.items !== null) {
      for (const [i, item] of value.entries()) {
        errors.push(...check(root, schema.items as SchemaNode, item, `${at}[${i}]`));
      }
    }
  }

  if (typeof value === "object" && value !== null && !Array.isArray(value)) {
    const obj = value as Record<string, unknown>;
    const props = (schema.properties ?? {}) as Record<string, SchemaNode>;
    if (Array.isArray(schema.required)) {
      for (const name of schema.required as string[]) {
        if (!(name in obj)) {
          errors.push(`${at}: missing required property ${name}`);
        }
      }
    }
    for (const [name, propSchema] of Object.entries(props)) {
      if (name in obj) {
        errors.push(...check(root, propSchema, obj[name], `${at}.${name}`));
      }
    }
    if (schema.additionalProperties === false) {
      for (const name of Object.keys(obj)) {
        if (!(name in props)) {
          errors.push(`${at}: unexpected property ${name}`);
        }
      }
    }
  }

  return errors;
}

/** Validate `value` against `schema`; returns error strings, empty if valid. */
export function validate(schema: SchemaNode, value: unknown): string[] {
  return check(schema, schema, value, "");
}
