#!/usr/bin/env node
/** Command line entry point: `routegame-render render --preset fig5 ...` */

import yargs from "yargs";

import { isPreset, PRESETS } from "./presets";
import { renderPreset } from "./render";
import { DataError } from "./types";

export async function main(argv: string[]): Promise<number> {
  try {
    const args = await yargs(argv)
      .scriptName("routegame-render")
      .command(
        "render",
        "render a figure preset from learning-run directories",
        (y) =>
          y
            .option("preset", {
              describe: "figure preset to draw",
              choices: PRESETS,
              demandOption: true,
            })
            .option("runs", {
              describe: "one run directory per series",
              type: "string",
              array: true,
              demandOption: true,
            })
            .option("out", {
              describe: "directory for the rendered SVG files",
              type: "string",
              demandOption: true,
            })
            .option("width", { type: "number", default: 840 })
            .option("height", { type: "number", default: 460 }),
      )
      .demandCommand(1, "specify a command (try: render)")
      .strict()
      .exitProcess(false)
      .fail((msg, err) => {
        throw err ?? new DataError(msg);
      })
      .parseAsync();
    if (args._[0] !== "render") {
      throw new DataError(`unknown command ${String(args._[0])}`);
    }
    const preset = String(args.preset);
    if (!isPreset(preset)) {
      throw new DataError(`unknown preset ${preset}`);
    }
    const files = renderPreset(preset, args.runs as string[], String(args.out), {
      width: Number(args.width),
      height: Number(args.height),
    });
    for (const file of files) {
      process.stdout.write(`${file}\n`);
    }
    return 0;
  } catch (err) {
    if (err instanceof Error) {
      process.stderr.write(`error: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  void main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
