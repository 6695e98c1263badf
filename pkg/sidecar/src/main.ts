/** CLI entry: `node dist/main.js serve --port 8750 [--vocab-size N] ...` */

import { SidecarServer } from "./server";

function intFlag(args: string[], name: string): number | undefined {
  const index = args.indexOf(name);
  if (index < 0) return undefined;
  const value = Number(args[index + 1]);
  if (!Number.isInteger(value)) {
    throw new Error(`${name} expects an integer, got ${args[index + 1]}`);
  }
  return value;
}

async function main(): Promise<void> {
  const args = process.argv.slice(2);
  if (args[0] !== "serve") {
    console.error("usage: main.js serve [--port N] [--vocab-size N] " +
      "[--d-model N] [--layers N] [--heads N] [--ffn N]");
    process.exit(1);
  }
  const architecture: Record<string, number> = {};
  for (const [flag, key] of [
    ["--d-model", "dModel"],
    ["--layers", "numLayers"],
    ["--heads", "numHeads"],
    ["--ffn", "ffnDim"],
  ] as const) {
    const value = intFlag(args, flag);
    if (value !== undefined) architecture[key] = value;
  }
  const server = new SidecarServer({
    vocabSize: intFlag(args, "--vocab-size"),
    architecture,
  });
  const port = await server.start(intFlag(args, "--port") ?? 8750);
  console.log(`ctxner sidecar listening on http://127.0.0.1:${port}`);
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
