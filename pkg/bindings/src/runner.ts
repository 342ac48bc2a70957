/**
 * Process plumbing: every binding call shells out to the codec CLI with
 * tensors exchanged through a temporary directory.
 */

import { spawnSync } from 'node:child_process'
import { mkdtempSync, rmSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'

/** Raised when the CLI exits nonzero; carries its stderr (e.g. "InvalidPolygon: ..."). */
export class CliError extends Error {
  constructor(
    public readonly command: string,
    public readonly exitCode: number | null,
    stderr: string,
  ) {
    super(`centripetal ${command} failed (exit ${exitCode}): ${stderr.trim()}`)
  }
}

export function cliInvocation(): { program: string; prefix: string[] } {
  const override = process.env.CENTRIPETAL_CLI
  if (override) {
    const parts = override.split(' ').filter(Boolean)
    return { program: parts[0], prefix: parts.slice(1) }
  }
  const python = process.env.CENTRIPETAL_PYTHON ?? 'python3'
  return { program: python, prefix: ['-m', 'centripetal'] }
}

export function runCli(args: string[]): string {
  const { program, prefix } = cliInvocation()
  const result = spawnSync(program, [...prefix, ...args], {
    encoding: 'utf8',
    maxBuffer: 256 * 1024 * 1024,
  })
  if (result.error) throw result.error
  if (result.status !== 0) {
    throw new CliError(args[0] ?? '', result.status, result.stderr ?? '')
  }
  return result.stdout
}

export function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), 'centripetal-'))
  try {
    return fn(dir)
  } finally {
    rmSync(dir, { recursive: true, force: true })
  }
}
